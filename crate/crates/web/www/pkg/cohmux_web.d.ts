/* tslint:disable */
/* eslint-disable */

/**
 * Rows `[alpha, |<alpha|-alpha>|^2]` for `steps` amplitudes in `[0, alpha_max]`.
 */
export function overlap_curve(alpha_max: number, steps: number): Float64Array;

/**
 * Rows `[alpha, adders, extractions, re-merges, end_to_end]` of worst-case
 * success products. Every adder uses `m`; re-merges keep the default schedule.
 */
export function probability_sweep(m_factor: number, m: number, n: number, alpha_lo: number, alpha_hi: number, steps: number): Float64Array;

/**
 * Branch amplitudes of an `n`-user qudit, ascending, followed by the worst
 * relative extraction deviation of each user (lowest level first).
 */
export function qudit_layout(alpha: number, m_factor: number, n: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly overlap_curve: (a: number, b: number) => [number, number, number, number];
    readonly probability_sweep: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly qudit_layout: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
