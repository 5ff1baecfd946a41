import init, { berry_phase_curve, inversion_curve, echo_phase_curve } from "./pkg/geophase_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// Lines share one set of axes; each series is [xs, ys, colour, dots].
function plot(canvas, series, yRange) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 48;
  ctx.clearRect(0, 0, w, h);
  const xs = series.flatMap((s) => Array.from(s[0]));
  const ys = series.flatMap((s) => Array.from(s[1]));
  let [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = yRange ?? [Math.min(...ys), Math.max(...ys)];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) { y0 -= 1; y1 += 1; }
  const px = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const py = (y) => h - pad + ((y0 - y) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#888";
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  for (let k = 0; k <= 4; k++) {
    const xv = x0 + ((x1 - x0) * k) / 4;
    const yv = y0 + ((y1 - y0) * k) / 4;
    ctx.fillText(xv.toPrecision(3), px(xv) - 12, h - pad + 16);
    ctx.fillText(yv.toPrecision(3), 2, py(yv) + 4);
  }
  for (const [sx, sy, colour, dots] of series) {
    ctx.strokeStyle = ctx.fillStyle = colour;
    ctx.beginPath();
    for (let i = 0; i < sx.length; i++) {
      if (dots) {
        ctx.fillRect(px(sx[i]) - 3, py(sy[i]) - 3, 6, 6);
      } else if (i === 0) {
        ctx.moveTo(px(sx[i]), py(sy[i]));
      } else {
        ctx.lineTo(px(sx[i]), py(sy[i]));
      }
    }
    if (!dots) ctx.stroke();
  }
}

function guarded(button, job) {
  $(button).addEventListener("click", () => {
    $(button).disabled = true;
    // Let the button repaint before the synchronous computation.
    setTimeout(() => {
      try {
        job();
      } catch (e) {
        alert(e.message ?? e);
      } finally {
        $(button).disabled = false;
      }
    }, 10);
  });
}

function runBerry() {
  const c = berry_phase_curve(num("b-samples"), num("b-steps"));
  plot($("b-plot"), [[c.x, c.reference, "#36c", false], [c.x, c.y, "#c33", true]], [0, Math.PI]);
}

function runInversion() {
  const period = num("i-period");
  const c = inversion_curve(num("i-delta"), num("i-omega"), num("i-lambda"), period, Math.round(400 * period), 600);
  const wT = c.reference[0];
  const last = c.y[c.y.length - 1];
  plot($("i-plot"), [[c.x, c.y, "#c33", false], [[period], [wT], "#36c", true]], [-1, 1]);
  $("i-msg").textContent = `w(T): integrated ${last.toFixed(5)}, closed form ${wT.toFixed(5)}`;
}

function runEcho() {
  const [lo, hi] = [num("e-lo"), num("e-hi")];
  const energies = Float64Array.from({ length: 9 }, (_, k) => lo + ((hi - lo) * k) / 8);
  const period = num("e-period");
  const c = echo_phase_curve(num("e-theta"), period, Math.round(100 * period), energies);
  plot(
    $("e-plot"),
    [[c.x, c.extra, "#999", true], [c.x, c.reference, "#36c", false], [c.x, c.y, "#c33", true]],
    [-Math.PI, Math.PI],
  );
}

await init();
guarded("b-run", runBerry);
guarded("i-run", runInversion);
guarded("e-run", runEcho);
runBerry();
