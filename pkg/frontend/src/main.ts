/** Browser shell: renders the editor state and wires DOM events. */

import { StudioApi } from "./api";
import { StudioController } from "./controller";
import { EditorState, exportTrajectory, importTrajectory, validateForExport } from "./state";
import { EASINGS, KINDS, MAGNITUDE_KEY } from "./schema";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}

function renderMoves(root: HTMLElement, controller: StudioController): void {
  const state = controller.state;
  root.replaceChildren();
  state.moves.forEach((move, index) => {
    const row = el("div", { class: "move-row" });

    const kind = el("select");
    for (const k of KINDS) {
      const option = el("option", { value: k }, k);
      if (k === move.kind) {
        option.selected = true;
      }
      kind.append(option);
    }
    kind.onchange = () => controller.editMove(index, "kind", kind.value);

    const magnitude = el("input", {
      value: String(move.magnitude),
      title: MAGNITUDE_KEY[move.kind],
    }) as HTMLInputElement;
    magnitude.onchange = () => controller.editMove(index, "magnitude", magnitude.value);

    const ease = el("select");
    for (const e of EASINGS) {
      const option = el("option", { value: e }, e);
      if (e === move.ease) {
        option.selected = true;
      }
      ease.append(option);
    }
    ease.onchange = () => controller.editMove(index, "ease", ease.value);

    row.append(kind, magnitude, ease);

    if (move.kind === "orbit") {
      const pivot = el("input", {
        value: String(move.pivotDepth ?? ""),
        title: "pivot_depth",
      }) as HTMLInputElement;
      pivot.onchange = () => controller.editMove(index, "pivotDepth", pivot.value);
      row.append(pivot);
    }

    const remove = el("button", {}, "✕");
    remove.onclick = () => controller.removeMove(index);
    row.append(remove);
    root.append(row);
  });
}

function download(name: string, text: string): void {
  const blob = new Blob([text], { type: "application/json" });
  const link = el("a", { href: URL.createObjectURL(blob), download: name });
  link.click();
  URL.revokeObjectURL(link.href);
}

export async function boot(root: HTMLElement, baseUrl = ""): Promise<void> {
  const api = new StudioApi(baseUrl);
  const info = await api.clipInfo();
  const controller = new StudioController(api, info.frames);

  const image = el("img", { class: "preview", alt: "preview" }) as HTMLImageElement;
  const coverage = el("span", { class: "coverage" });
  const banner = el("div", { class: "banner" });
  const fieldError = el("div", { class: "field-error" });
  const slider = el("input", {
    type: "range",
    min: "0",
    max: String(info.frames - 1),
    value: "0",
  }) as HTMLInputElement;
  slider.oninput = () => controller.selectFrame(Number(slider.value));

  const movesBox = el("div", { class: "moves" });
  const addButtons = el("div", { class: "add-buttons" });
  for (const kind of KINDS) {
    const button = el("button", {}, `+ ${kind}`);
    button.onclick = () => controller.addMove(kind);
    addButtons.append(button);
  }

  const exportButton = el("button", {}, "Export trajectory JSON");
  exportButton.onclick = () => {
    const problems = validateForExport(controller.state);
    if (problems.length > 0) {
      fieldError.textContent = problems
        .map((p) => `moves[${p.index}]: ${p.message}`)
        .join("; ");
      return;
    }
    download("trajectory.json", exportTrajectory(controller.state));
  };

  const importInput = el("input", { type: "file", accept: ".json" }) as HTMLInputElement;
  importInput.onchange = async () => {
    const file = importInput.files?.[0];
    if (!file) {
      return;
    }
    const state = importTrajectory(await file.text());
    controller.state = { ...state, frames: info.frames };
    renderMoves(movesBox, controller);
    controller.schedulePreview();
  };

  controller.subscribe((state: EditorState) => {
    if (state.preview) {
      image.src = state.preview.imageUrl;
      coverage.textContent = state.preview.validFraction;
    }
    banner.textContent = state.banner ?? "";
    fieldError.textContent = state.fieldError ?? "";
    renderMoves(movesBox, controller);
  });

  root.append(
    el("h1", {}, "recam studio"),
    image,
    el("div", {}, "coverage: "),
    coverage,
    banner,
    slider,
    addButtons,
    movesBox,
    fieldError,
    exportButton,
    importInput,
  );
  renderMoves(movesBox, controller);
  controller.schedulePreview();
}

if (typeof document !== "undefined" && document.getElementById("studio-root")) {
  void boot(document.getElementById("studio-root") as HTMLElement);
}
