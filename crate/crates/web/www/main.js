import init, { syntheticScatter, corpusScatter, compareSpaces } from "./pkg/mood_manifold_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

const SAMPLE = [
  ["happy", "sunny day with friends so good"],
  ["happy", "good news and a sunny walk"],
  ["happy", "so good to see friends"],
  ["sad", "rainy and alone again"],
  ["sad", "miss them so much rainy night"],
  ["sad", "alone with the rain"],
  ["tired", "long shift need sleep"],
  ["tired", "no sleep long week"],
  ["tired", "need coffee and sleep"],
  ["annoyed", "traffic again so late"],
  ["annoyed", "late bus and traffic"],
  ["annoyed", "why is the traffic so bad"],
].map(([label, text], i) => JSON.stringify({ id: String(i), text, label })).join("\n");

function show(target, run, asText) {
  const out = $(target);
  try {
    const result = run();
    if (asText) {
      out.innerHTML = "";
      const pre = document.createElement("pre");
      pre.textContent = result;
      out.appendChild(pre);
    } else {
      out.innerHTML = result;
    }
  } catch (e) {
    out.innerHTML = "";
    const p = document.createElement("p");
    p.className = "error";
    p.textContent = String(e.message ?? e);
    out.appendChild(p);
  }
}

await init();
$("c-text").value = SAMPLE;

$("s-run").onclick = () =>
  show("s-out", () =>
    syntheticScatter(num("s-classes"), num("s-sep"), num("s-seed"), $("s-fx").checked, $("s-fy").checked));

$("c-run").onclick = () =>
  show("c-out", () =>
    corpusScatter($("c-text").value, num("c-mindf"), $("c-fx").checked, $("c-fy").checked));

$("t-run").onclick = () => {
  $("t-out").textContent = "running...";
  // Let the message paint before the trials block the page.
  setTimeout(() =>
    show("t-out", () =>
      compareSpaces(num("t-classes"), num("t-sep"), num("t-noise"), num("t-trials"), num("t-seed")), true), 0);
};

$("s-run").click();
