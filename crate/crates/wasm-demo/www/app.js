import init, { cluster_demo, threshold_demo, dendrogram } from "./pkg/survclust_wasm.js";

const $ = (id) => document.getElementById(id);
const esc = (s) => String(s).replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);

function call(fn, ...args) {
  const out = JSON.parse(fn(...args));
  if (out.error) throw new Error(out.error);
  return out;
}

function table(head, rows) {
  const th = head.map((h) => `<th>${esc(h)}</th>`).join("");
  const tr = rows.map((r) => `<tr>${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  return `<table><tr>${th}</tr>${tr}</table>`;
}

function guard(target, f) {
  try {
    f();
  } catch (e) {
    $(target).innerHTML = `<p class="bad">${esc(e.message)}</p>`;
  }
}

function runCluster() {
  guard("cluster-out", () => {
    const r = call(cluster_demo, +$("n").value, +$("frac").value, +$("k").value, +$("seed").value);
    const rows = r.results.map((m) => [
      esc(m.method),
      esc(m.sizes.join(", ")),
      m.need_cluster,
      `${m.captured} / ${m.planted}`,
      `${(100 * m.recall).toFixed(1)}%`,
      m.degenerate ? '<span class="bad">yes</span>' : "no",
    ]);
    $("cluster-out").innerHTML =
      `<p>${r.n} respondents, ${r.planted} planted, clustered on ${r.retained_questions.length} questions.</p>` +
      table(["Method", "Sizes", "Need cluster", "Planted captured", "Recall", "Degenerate"], rows);
  });
}

function runThreshold() {
  guard("threshold-out", () => {
    const r = call(threshold_demo, $("values").value, +$("alpha").value);
    const cut = r.cutoff === null ? "none (sample too small)" : r.cutoff.toFixed(4);
    $("threshold-out").innerHTML =
      `<p>n = ${r.n}, skewness ${r.skewness.toFixed(3)}, excess kurtosis ${r.excess_kurtosis.toFixed(3)}: ` +
      `<b>${esc(r.branch)}</b> branch, cutoff ${cut}.</p>` +
      `<p>Flagged positions (0-based): ${r.flagged.join(", ") || "none"}</p>`;
  });
}

function runTree() {
  guard("tree-out", () => {
    const d = call(dendrogram, $("points").value, $("linkage").value);
    const name = (i) => (i < d.n_leaves ? `p${i}` : `m${i - d.n_leaves + 1}`);
    const rows = d.merges.map((m, s) => [`m${s + 1}`, name(m.left), name(m.right), m.height.toFixed(3), m.size]);
    $("tree-out").innerHTML = table(["Merge", "Left", "Right", "Height", "Size"], rows);
  });
}

await init();
$("run-cluster").onclick = runCluster;
$("run-threshold").onclick = runThreshold;
$("run-tree").onclick = runTree;
runThreshold();
runTree();
