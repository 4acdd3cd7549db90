import init, { overlap_curve, probability_sweep, qudit_layout } from "./pkg/cohmux_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

function rows(flat, width) {
  const out = [];
  for (let i = 0; i < flat.length; i += width) out.push(Array.from(flat.slice(i, i + width)));
  return out;
}

function report(id, fn) {
  try {
    $(id).classList.remove("err");
    fn();
  } catch (e) {
    $(id).classList.add("err");
    $(id).textContent = String(e);
  }
}

// Line chart with y in [0, 1]; series are arrays of [x, y].
function plot(canvas, series, labels) {
  const g = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 36;
  g.clearRect(0, 0, w, h);
  const xs = series.flat().map((p) => p[0]);
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - y * (h - 2 * pad);
  g.strokeStyle = "#999";
  g.fillStyle = "#444";
  g.font = "11px sans-serif";
  g.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  for (const t of [0, 0.5, 1]) g.fillText(t.toFixed(1), 6, sy(t) + 4);
  g.fillText(x0.toFixed(2), pad, h - pad + 14);
  g.fillText(x1.toFixed(2), w - pad - 24, h - pad + 14);
  series.forEach((s, k) => {
    g.strokeStyle = COLORS[k % COLORS.length];
    g.beginPath();
    s.forEach(([x, y], i) => (i ? g.lineTo(sx(x), sy(y)) : g.moveTo(sx(x), sy(y))));
    g.stroke();
    g.fillStyle = g.strokeStyle;
    g.fillText(labels[k], pad + 8 + 110 * k, pad - 8);
  });
}

function overlap() {
  report("ov-out", () => {
    const pts = rows(overlap_curve(num("ov-alpha"), 121), 2);
    plot($("ov-plot"), [pts], ["|<alpha|-alpha>|^2"]);
    const at2 = pts.reduce((a, b) => (Math.abs(b[0] - 2) < Math.abs(a[0] - 2) ? b : a));
    $("ov-out").textContent = `overlap at alpha=${at2[0].toFixed(3)}: ${at2[1].toExponential(3)}`;
  });
}

function sweep() {
  report("sw-out", () => {
    const r = rows(probability_sweep(num("sw-M"), num("sw-m"), num("sw-n"), 0.5, 3.5, 61), 5);
    const names = ["adders", "extractions", "re-merges", "end to end"];
    plot($("sw-plot"), names.map((_, k) => r.map((row) => [row[0], row[k + 1]])), names);
    const best = r.reduce((a, b) => (b[4] > a[4] ? b : a));
    $("sw-out").textContent = `best end-to-end ${best[4].toFixed(4)} at alpha=${best[0].toFixed(2)}`;
  });
}

function layout() {
  report("ql-out", () => {
    const n = num("ql-n");
    const v = Array.from(qudit_layout(num("ql-alpha"), num("ql-M"), n));
    const amps = v.slice(0, v.length - n), eps = v.slice(v.length - n);
    const c = $("ql-plot"), g = c.getContext("2d");
    const w = c.width, h = c.height, pad = 20;
    const lim = Math.max(...amps.map(Math.abs)) || 1;
    const sx = (x) => w / 2 + (x / lim) * (w / 2 - pad);
    g.clearRect(0, 0, w, h);
    g.strokeStyle = "#999";
    g.beginPath();
    g.moveTo(pad, h / 2);
    g.lineTo(w - pad, h / 2);
    g.stroke();
    g.fillStyle = COLORS[0];
    for (const a of amps) {
      g.beginPath();
      g.arc(sx(a), h / 2, 4, 0, 2 * Math.PI);
      g.fill();
    }
    $("ql-out").textContent =
      `${amps.length} branches: ${amps.map((a) => a.toFixed(1)).join(" ")}\n` +
      eps.map((e, u) => `user ${u}: extraction deviation ${e.toFixed(4)}`).join("\n");
  });
}

await init();
$("ov-run").onclick = overlap;
$("sw-run").onclick = sweep;
$("ql-run").onclick = layout;
overlap();
sweep();
layout();
