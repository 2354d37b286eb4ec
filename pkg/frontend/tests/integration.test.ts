/** Live integration against the mock-adapter service. Opt-in:
 *
 *   faceveil serve --mock --port 8099 &
 *   FACEVEIL_SERVICE_URL=http://127.0.0.1:8099 npm test
 *
 * Skips cleanly when the env var is unset, so the default suite stays
 * hermetic. Exercises the upload -> protect -> compare -> download flow,
 * the NoFaceFound path, and the preset switch with real HTTP.
 */

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import {
  downloadEnabled,
  initialState,
  protectedPreviewVisible,
  reduce,
  SessionState,
} from "../src/state.js";

const SERVICE = process.env.FACEVEIL_SERVICE_URL;
const live = SERVICE ? describe : describe.skip;

function fixture(name: string): Blob {
  const path = fileURLToPath(new URL(`./fixtures/${name}`, import.meta.url));
  return new Blob([readFileSync(path)], { type: "image/png" });
}

/** Drive the reducer exactly the way the UI layer does. */
async function protectFlow(
  client: ServiceClient,
  state: SessionState,
  image: Blob,
): Promise<SessionState> {
  const preset = state.selectedPreset;
  state = reduce(state, { type: "submit-started", preset });
  const jobId = await client.submitProtect(image, preset);
  state = reduce(state, { type: "job-accepted", jobId });
  const status = await client.pollUntilFinished(jobId, {
    intervalMs: 50,
    onUpdate: (s) => {
      if (s.state === "queued" || s.state === "running") {
        state = reduce(state, { type: "job-status", state: s.state });
      }
    },
  });
  if (status.state === "failed") {
    return reduce(state, { type: "job-failed", error: status.error ?? "failed" });
  }
  const blob = await client.getResultBlob(jobId);
  expect(blob.size).toBeGreaterThan(0);
  return reduce(state, {
    type: "job-done",
    protectedUrl: `blob:${jobId}`,
    displacement: status.per_model_displacement ?? {},
    lpipsCost: status.lpips_cost ?? 0,
  });
}

live("against a running mock-adapter service", () => {
  const client = new ServiceClient(SERVICE!);

  it("completes upload -> protect -> compare -> download", async () => {
    let state = reduce(initialState(), {
      type: "file-selected",
      url: "blob:orig",
      name: "face.png",
    });
    const info = await client.getPresets();
    state = reduce(state, {
      type: "presets-loaded",
      presets: info.presets,
      defaultPreset: info.default,
    });
    expect(state.selectedPreset).toBe("standard");

    state = await protectFlow(client, state, fixture("face.png"));
    expect(state.phase).toBe("done");
    expect(protectedPreviewVisible(state)).toBe(true);
    expect(downloadEnabled(state)).toBe(true);
    expect(state.displacement.length).toBeGreaterThan(0);
  }, 60_000);

  it("renders NoFaceFound without a download", async () => {
    let state = reduce(initialState(), {
      type: "file-selected",
      url: "blob:orig",
      name: "noface.png",
    });
    state = await protectFlow(client, state, fixture("noface.png"));
    expect(state.phase).toBe("failed");
    expect(state.error).toContain("NoFaceFound");
    expect(downloadEnabled(state)).toBe(false);
  }, 60_000);

  it("preset switch re-submits and shows fresh scores", async () => {
    let state = reduce(initialState(), {
      type: "file-selected",
      url: "blob:orig",
      name: "face.png",
    });
    state = await protectFlow(client, state, fixture("face.png"));
    expect(state.jobPreset).toBe("standard");

    state = reduce(state, { type: "preset-selected", preset: "small" });
    expect(protectedPreviewVisible(state)).toBe(false); // stale preview hidden

    state = await protectFlow(client, state, fixture("face.png"));
    expect(state.phase).toBe("done");
    expect(state.jobPreset).toBe("small");
    expect(protectedPreviewVisible(state)).toBe(true);
  }, 60_000);
});
