import init, { Demo, marginalize } from "./pkg/polylink_demo.js";

const $ = (id) => document.getElementById(id);
const fmt = (x) => (Number.isFinite(x) ? x.toFixed(4) : String(x));

function escape(s) {
  return s.replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function showError(el, e) {
  el.innerHTML = `<p class="err">${escape(String(e.message ?? e))}</p>`;
}

function runLink(demo) {
  const out = $("link-out");
  try {
    const v = JSON.parse(
      demo.link(
        $("lang").value.trim(),
        $("left").value,
        $("mention").value,
        $("right").value,
        Number($("beams").value),
        Number($("alpha").value),
        $("marginalize").checked,
        $("candidates").checked,
      ),
    );
    const rows = v.ranking
      .map(
        (e) => `<tr><td>${e.qid}</td><td>${escape(e.label)}</td><td class="num">${fmt(e.score)}</td>
          <td class="mono">${e.identifiers
            .map((i) => `${escape(i.identifier)} <span class="muted">(${fmt(i.logprob)}, ${i.length})</span>`)
            .join("<br>")}</td></tr>`,
      )
      .join("");
    const source = v.restricted
      ? `decoded over ${v.candidate_count} alias candidates`
      : $("candidates").checked
        ? "no alias candidates, decoded over the full trie"
        : "decoded over the full trie";
    out.innerHTML = `<p>Prediction: <b>${v.prediction}</b> ${escape(v.label)} <span class="muted">(${source})</span></p>
      <table><tr><th>entity</th><th>label</th><th>score</th><th>identifiers in beam (logprob, length)</th></tr>${rows}</table>`;
  } catch (e) {
    showError(out, e);
  }
}

function runTrie(demo) {
  const out = $("trie-out");
  const prefix = $("prefix").value;
  const v = JSON.parse(demo.explore(prefix));
  if (!v.in_trie) {
    out.innerHTML = `<p class="err">No identifier starts with this prefix.</p>`;
    return;
  }
  const tokens = v.next
    .map((n) => {
      const shown = n.symbol === " " ? "␠" : escape(n.symbol);
      return `<span class="tok" data-symbol="${escape(n.symbol)}">${shown} <small>${n.reachable}</small></span>`;
    })
    .join("");
  const completes = v.completes.length
    ? `<p>Complete identifier for: ${v.completes
        .map((c) => `${c.qid} (${c.lang}${c.redirect ? ", redirect" : ""})`)
        .join(", ")}</p>`
    : "";
  out.innerHTML = `<p>Allowed next tokens <span class="muted">(with reachable identifiers)</span>:</p>${tokens}${completes}`;
  for (const el of out.querySelectorAll(".tok")) {
    if (el.dataset.symbol === "EOS") continue;
    el.addEventListener("click", () => {
      $("prefix").value += el.dataset.symbol;
      runTrie(demo);
    });
  }
}

function runMargin() {
  const out = $("margin-out");
  try {
    const lines = $("terms").value.split("\n").map((l) => l.trim()).filter(Boolean);
    const pairs = lines.map((l) => l.split(/\s+/).map(Number));
    if (pairs.some((p) => p.length !== 2 || p.some(Number.isNaN))) {
      throw new Error("each line needs a logprob and a length");
    }
    const v = JSON.parse(
      marginalize(
        Float64Array.from(pairs.map((p) => p[0])),
        Uint32Array.from(pairs.map((p) => p[1])),
        Number($("m-alpha").value),
      ),
    );
    const rows = v.normalized.map((x, i) => `<tr><td class="mono">${lines[i]}</td><td class="num">${fmt(x)}</td></tr>`).join("");
    out.innerHTML = `<table><tr><th>identifier</th><th>logprob / length^alpha</th></tr>${rows}</table>
      <p>Marginal score <b>${fmt(v.marginal)}</b> <span class="muted">vs best single ${fmt(v.best_single)}</span></p>`;
  } catch (e) {
    showError(out, e);
  }
}

async function main() {
  await init();
  const demo = new Demo();
  $("status").textContent = `Toy KB: ${demo.entityCount()} entities, ${demo.identifierCount()} identifiers.`;
  for (const id of ["lang", "left", "mention", "right", "beams", "alpha", "marginalize", "candidates"]) {
    $(id).addEventListener("input", () => runLink(demo));
  }
  $("prefix").addEventListener("input", () => runTrie(demo));
  $("back").addEventListener("click", () => {
    $("prefix").value = [...$("prefix").value].slice(0, -1).join("");
    runTrie(demo);
  });
  $("terms").addEventListener("input", runMargin);
  $("m-alpha").addEventListener("input", runMargin);
  runLink(demo);
  runTrie(demo);
  runMargin();
}

main().catch((e) => showError($("status"), e));
