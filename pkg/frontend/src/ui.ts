/** DOM layer: renders the session state and wires user intent into the
 * state machine + service client. Uploads happen only from the explicit
 * protect button; previews are local object URLs (downscaled for display,
 * the original file goes to the service untouched). */

import { NetworkError, ServiceClient, ServiceError } from "./api.js";
import {
  SessionEvent,
  SessionState,
  canSubmit,
  downloadEnabled,
  initialState,
  presetDescription,
  protectedPreviewVisible,
  reduce,
} from "./state.js";

const PREVIEW_MAX_SIDE = 512;

export class App {
  private state: SessionState = initialState();
  private file: File | null = null;
  private root: HTMLElement;

  constructor(private client: ServiceClient, mount: HTMLElement) {
    this.root = mount;
    this.render();
    void this.loadPresets();
  }

  private dispatch(event: SessionEvent): void {
    this.state = reduce(this.state, event);
    this.render();
  }

  private async loadPresets(): Promise<void> {
    try {
      const info = await this.client.getPresets();
      this.dispatch({
        type: "presets-loaded",
        presets: info.presets,
        defaultPreset: info.default,
      });
    } catch {
      // keep the built-in preset list; service may come up later
    }
  }

  private async onFilePicked(file: File): Promise<void> {
    this.file = file;
    const url = await downscalePreview(file);
    this.dispatch({ type: "file-selected", url, name: file.name });
  }

  private async onProtect(): Promise<void> {
    if (!this.file || !canSubmit(this.state)) return;
    const preset = this.state.selectedPreset;
    this.dispatch({ type: "submit-started", preset });
    try {
      const jobId = await this.client.submitProtect(this.file, preset);
      this.dispatch({ type: "job-accepted", jobId });
      const status = await this.client.pollUntilFinished(jobId, {
        onUpdate: (s) => {
          if (s.state === "queued" || s.state === "running") {
            this.dispatch({ type: "job-status", state: s.state });
          }
        },
      });
      if (status.state === "failed") {
        this.dispatch({ type: "job-failed", error: status.error ?? "job failed" });
        return;
      }
      const blob = await this.client.getResultBlob(jobId);
      this.dispatch({
        type: "job-done",
        protectedUrl: URL.createObjectURL(blob),
        displacement: status.per_model_displacement ?? {},
        lpipsCost: status.lpips_cost ?? 0,
      });
    } catch (err) {
      if (err instanceof ServiceError) {
        this.dispatch({ type: "job-failed", error: err.detail });
      } else if (err instanceof NetworkError) {
        this.dispatch({ type: "network-error", message: err.message });
      } else {
        this.dispatch({ type: "job-failed", error: String(err) });
      }
    }
  }

  private render(): void {
    const s = this.state;
    this.root.replaceChildren();

    const title = el("h1", "faceveil");
    const tagline = el(
      "p",
      "Apply an adversarial filter to a photo so face recognition systems " +
        "stop matching it to you. Nothing uploads until you press Protect.",
    );
    tagline.className = "tagline";

    // --- controls -------------------------------------------------------
    const picker = document.createElement("input");
    picker.type = "file";
    picker.accept = "image/png,image/jpeg";
    picker.id = "file-picker";
    picker.addEventListener("change", () => {
      const f = picker.files?.[0];
      if (f) void this.onFilePicked(f);
    });

    const presetRow = document.createElement("div");
    presetRow.className = "presets";
    for (const preset of s.presets) {
      const label = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = "preset";
      radio.value = preset;
      radio.checked = preset === s.selectedPreset;
      radio.addEventListener("change", () =>
        this.dispatch({ type: "preset-selected", preset }),
      );
      label.append(radio, ` ${preset}`);
      presetRow.append(label);
    }
    const tradeoff = el("p", presetDescription(s.selectedPreset));
    tradeoff.className = "tradeoff";
    tradeoff.id = "tradeoff";

    const protect = document.createElement("button");
    protect.id = "protect";
    protect.textContent =
      s.phase === "uploading" ? "Uploading..." :
      s.phase === "queued" ? "Queued..." :
      s.phase === "running" ? "Protecting..." : "Protect";
    protect.disabled = !canSubmit(s);
    protect.addEventListener("click", () => void this.onProtect());

    const controls = document.createElement("div");
    controls.className = "controls";
    controls.append(picker, presetRow, tradeoff, protect);

    // --- status / errors --------------------------------------------------
    const status = document.createElement("div");
    status.id = "status";
    if (s.phase === "failed" && s.error) {
      const msg = el("p", friendlyError(s.error));
      msg.className = "error";
      status.append(msg);
      if (s.retryable) {
        const retry = document.createElement("button");
        retry.id = "retry";
        retry.textContent = "Retry";
        retry.addEventListener("click", () => void this.onProtect());
        status.append(retry);
      }
    }

    // --- comparator -------------------------------------------------------
    const showProtected = protectedPreviewVisible(s);
    const comparator = document.createElement("div");
    comparator.id = "comparator";
    comparator.className = "comparator";
    if (s.originalUrl) {
      const original = document.createElement("img");
      original.src = s.originalUrl;
      original.alt = "original";
      comparator.append(original);
      if (showProtected && s.protectedUrl) {
        const prot = document.createElement("img");
        prot.src = s.protectedUrl;
        prot.alt = "protected";
        prot.className = "overlay";
        const slider = document.createElement("input");
        slider.type = "range";
        slider.min = "0";
        slider.max = "100";
        slider.value = "50";
        slider.id = "compare-slider";
        const apply = () => {
          prot.style.clipPath = `inset(0 ${100 - Number(slider.value)}% 0 0)`;
        };
        slider.addEventListener("input", apply);
        apply();
        comparator.append(prot, slider);
      }
    }

    // --- scores -----------------------------------------------------------
    const scores = document.createElement("div");
    scores.id = "scores";
    if (showProtected) {
      scores.append(el("h2", "Protection scores"));
      const maxDisp = Math.max(...s.displacement.map((d) => d.value), 1e-9);
      for (const bar of s.displacement) {
        const row = document.createElement("div");
        row.className = "bar-row";
        row.append(el("span", bar.modelId));
        const bg = document.createElement("div");
        bg.className = "bar-bg";
        const fill = document.createElement("div");
        fill.className = "bar-fill";
        fill.style.width = `${Math.round((100 * bar.value) / maxDisp)}%`;
        bg.append(fill);
        row.append(bg);
        scores.append(row);
      }
      scores.append(
        el("p", `visible distortion (perceptual): ${s.lpipsCost?.toFixed(4)}`),
      );
    }

    // --- download ---------------------------------------------------------
    const download = document.createElement("a");
    download.id = "download";
    download.textContent = "Download protected PNG";
    if (downloadEnabled(s) && s.protectedUrl) {
      download.href = s.protectedUrl;
      download.setAttribute("download", deriveDownloadName(s.originalName));
      download.className = "download enabled";
    } else {
      download.className = "download disabled";
      download.removeAttribute("href");
      download.setAttribute("aria-disabled", "true");
    }

    this.root.append(title, tagline, controls, status, comparator, scores, download);
  }
}

function el(tag: string, text: string): HTMLElement {
  const node = document.createElement(tag);
  node.textContent = text;
  return node;
}

export function deriveDownloadName(original: string | null): string {
  const stem = (original ?? "photo").replace(/\.[^.]+$/, "");
  return `${stem}.protected.png`;
}

export function friendlyError(detail: string): string {
  if (detail.includes("NoFaceFound")) {
    return (
      "No face was found in this photo, so there is nothing to protect. " +
      "Try a photo where the face is larger and clearly visible."
    );
  }
  return detail; // 4xx detail rendered verbatim
}

/** Downscaled object URL for display only; never leaves the browser. */
async function downscalePreview(file: File): Promise<string> {
  const originalUrl = URL.createObjectURL(file);
  try {
    const img = await loadImage(originalUrl);
    const scale = Math.min(
      1,
      PREVIEW_MAX_SIDE / Math.max(img.naturalWidth, img.naturalHeight),
    );
    if (scale >= 1) return originalUrl;
    const canvas = document.createElement("canvas");
    canvas.width = Math.round(img.naturalWidth * scale);
    canvas.height = Math.round(img.naturalHeight * scale);
    const ctx = canvas.getContext("2d");
    if (!ctx) return originalUrl;
    ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
    const blob = await new Promise<Blob | null>((resolve) =>
      canvas.toBlob(resolve, "image/png"),
    );
    if (!blob) return originalUrl;
    URL.revokeObjectURL(originalUrl);
    return URL.createObjectURL(blob);
  } catch {
    return originalUrl;
  }
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = reject;
    img.src = url;
  });
}
