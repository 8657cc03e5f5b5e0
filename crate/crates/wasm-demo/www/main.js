import init, { convergenceCurves, overheadCurves, quasiProbabilities } from "./pkg/vqe_lab_wasm.js";

const COLORS = { exact: "#1f77b4", shot: "#2ca02c", noisy: "#d62728", qem: "#9467bd", z: "#ff7f0e", c1: "#17becf", c2: "#8c564b" };
const $ = (id) => document.getElementById(id);

function frame(canvas, xs, ymin, ymax) {
  const ctx = canvas.getContext("2d");
  const pad = { l: 55, r: 10, t: 10, b: 25 };
  const w = canvas.width - pad.l - pad.r;
  const h = canvas.height - pad.t - pad.b;
  const xmin = xs[0], xmax = xs[xs.length - 1] === xmin ? xmin + 1 : xs[xs.length - 1];
  if (ymax === ymin) ymax = ymin + 1;
  const sx = (x) => pad.l + ((x - xmin) / (xmax - xmin)) * w;
  const sy = (y) => pad.t + (1 - (y - ymin) / (ymax - ymin)) * h;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad.l, pad.t, w, h);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  for (let i = 0; i <= 4; i++) {
    const y = ymin + (i / 4) * (ymax - ymin);
    ctx.fillText(y.toPrecision(3), 4, sy(y) + 4);
    const x = xmin + (i / 4) * (xmax - xmin);
    ctx.fillText(x.toPrecision(3), sx(x) - 10, canvas.height - 6);
  }
  return { ctx, sx, sy };
}

function line(f, xs, ys, color, dash = []) {
  const { ctx, sx, sy } = f;
  ctx.strokeStyle = color;
  ctx.setLineDash(dash);
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(ys[i])) : ctx.moveTo(sx(x), sy(ys[i]))));
  ctx.stroke();
  ctx.setLineDash([]);
}

function band(f, xs, lo, hi, color) {
  const { ctx, sx, sy } = f;
  ctx.fillStyle = color + "33";
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(hi[i])) : ctx.moveTo(sx(x), sy(hi[i]))));
  for (let i = xs.length - 1; i >= 0; i--) ctx.lineTo(sx(xs[i]), sy(lo[i]));
  ctx.fill();
}

function legend(el, names) {
  el.innerHTML = names.map((n) => `<span style="color:${COLORS[n]}">━ ${n}</span>`).join("");
}

function runConvergence() {
  const eps = +$("c-eps").value, nc = +$("c-nc").value, t = +$("c-t").value, seeds = +$("c-seeds").value;
  $("status").textContent = "running…";
  setTimeout(() => {
    try {
      const data = JSON.parse(convergenceCurves(eps, nc, t, seeds, 1n));
      const xs = data.regimes[0].mean.map((_, i) => i);
      const all = data.regimes.flatMap((r) => r.min.concat(r.max)).concat([data.ground]);
      const f = frame($("c-plot"), xs, Math.min(...all), Math.max(...all));
      for (const r of data.regimes) {
        band(f, xs, r.min, r.max, COLORS[r.name]);
        line(f, xs, r.mean, COLORS[r.name]);
      }
      line(f, [0, xs[xs.length - 1]], [data.ground, data.ground], "#000", [4, 4]);
      legend($("c-legend"), data.regimes.map((r) => r.name));
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e);
    }
  }, 10);
}

function drawOverhead() {
  const data = JSON.parse(overheadCurves(+$("o-n").value, +$("o-d").value, 120));
  const log = $("o-log").checked;
  const tr = (v) => (log ? v.map(Math.log10) : v);
  const series = ["z", "c1", "c2"].map((k) => [k, tr(data[k])]);
  const ys = series.flatMap(([, v]) => v);
  const f = frame($("o-plot"), data.gamma, Math.min(...ys), Math.max(...ys));
  for (const [k, v] of series) line(f, data.gamma, v, COLORS[k]);
  legend($("o-legend"), ["z", "c1", "c2"]);
}

function drawWeights() {
  const eps = +$("q-eps").value;
  $("q-eps-v").textContent = eps.toFixed(3);
  const data = JSON.parse(quasiProbabilities(+$("q-m").value, eps));
  $("q-summary").textContent =
    `one-norm Z = ${data.z.toFixed(4)}, identity sampled with p = ${data.p_identity.toFixed(4)}, reconstruction residual ${data.residual.toExponential(1)}`;
  const c = $("q-plot"), ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const n = data.q.length, bw = (c.width - 20) / n, mid = c.height / 2;
  const scale = (mid - 25) / Math.max(...data.q.map(Math.abs));
  ctx.font = "11px sans-serif";
  data.q.forEach((q, i) => {
    ctx.fillStyle = q >= 0 ? "#1f77b4" : "#d62728";
    const x = 10 + i * bw;
    ctx.fillRect(x + 2, q >= 0 ? mid - q * scale : mid, bw - 4, Math.abs(q) * scale);
    ctx.fillStyle = "#222";
    ctx.fillText(data.labels[i], x + bw / 2 - 6, c.height - 4);
  });
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(0, mid);
  ctx.lineTo(c.width, mid);
  ctx.stroke();
}

await init();
$("status").textContent = "";
$("c-run").onclick = runConvergence;
for (const id of ["o-n", "o-d", "o-log"]) $(id).oninput = drawOverhead;
$("q-eps").oninput = drawWeights;
$("q-m").onchange = drawWeights;
drawOverhead();
drawWeights();
runConvergence();
