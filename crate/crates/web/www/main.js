// Expects `wasm-pack build --target web --out-dir www/pkg` from crates/web.
import init, { eigenbasis, compare, project } from "./pkg/heatrisk_web.js";

const num = (id) => Number(document.getElementById(id).value);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

function plotLines(canvas, x, series) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const ys = series.flatMap((s) => s.y);
  const lo = Math.min(...ys), hi = Math.max(...ys);
  const sx = (v) => 30 + (v - x[0]) / (x[x.length - 1] - x[0]) * (canvas.width - 40);
  const sy = (v) => canvas.height - 20 - (v - lo) / (hi - lo || 1) * (canvas.height - 30);
  series.forEach((s, i) => {
    ctx.strokeStyle = s.color || COLORS[i % COLORS.length];
    ctx.setLineDash(s.dash || []);
    ctx.beginPath();
    s.y.forEach((v, j) => (j ? ctx.lineTo(sx(x[j]), sy(v)) : ctx.moveTo(sx(x[j]), sy(v))));
    ctx.stroke();
  });
  ctx.setLineDash([]);
}

function plotHistogram(canvas, h) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const n = h.counts1.length;
  const top = Math.max(...h.counts1, ...h.counts2);
  const w = (canvas.width - 40) / n;
  [[h.counts1, "rgba(31,119,180,0.6)"], [h.counts2, "rgba(214,39,40,0.45)"]].forEach(([counts, color]) => {
    ctx.fillStyle = color;
    counts.forEach((c, i) => {
      const bh = c / top * (canvas.height - 30);
      ctx.fillRect(30 + i * w, canvas.height - 20 - bh, w - 1, bh);
    });
  });
  ctx.fillStyle = "#000";
  ctx.fillText(h.edges[0].toFixed(1), 30, canvas.height - 5);
  ctx.fillText(h.edges[n].toFixed(1), canvas.width - 50, canvas.height - 5);
}

function show(id, value) {
  document.getElementById(id).textContent = JSON.stringify(value, null, 2);
}

await init();

document.getElementById("draw-basis").onclick = () => {
  const r = JSON.parse(eigenbasis(num("b0"), num("b1"), num("c"), num("modes"), 201));
  if (r.error) return show("basis-out", r);
  const series = r.modes.map((y) => ({ y }));
  series.push({ y: r.actuation_lifter, color: "#000", dash: [6, 4] });
  series.push({ y: r.sde_lifter, color: "#777", dash: [2, 3] });
  plotLines(document.getElementById("basis"), r.x, series);
  show("basis-out", { eigenvalues: r.eigenvalues });
};

document.getElementById("run-compare").onclick = () => {
  const r = JSON.parse(compare(num("samples"), num("seed"), num("steps"), num("alpha"), 60));
  if (r.error) return show("compare-out", r);
  plotHistogram(document.getElementById("hist"), r.histogram);
  const pick = (s) => ({ mean: s.mean, cvar: s.cvar, std: s.std });
  show("compare-out", { lq: pick(r.lq), uncontrolled: pick(r.open_loop), gain: r.gain });
};

document.getElementById("run-project").onclick = () => {
  const costs = new Float64Array(document.getElementById("costs").value.split(",").map(Number));
  show("project-out", JSON.parse(project(costs, num("palpha"), num("scale"))));
};

document.getElementById("draw-basis").click();
