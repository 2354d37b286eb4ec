/** Session state machine: one photo, one preset, at most one job in
 * flight. Pure reducer so the stale-preview rule can be property tested.
 *
 * The central invariants:
 *  - download is enabled only in the done phase;
 *  - changing the preset invalidates a protected preview computed under a
 *    different preset until a new job for the current preset completes.
 */

export type Phase =
  | "idle"
  | "uploading"
  | "queued"
  | "running"
  | "done"
  | "failed";

export interface DisplacementBar {
  modelId: string;
  value: number; // relative feature displacement
}

export interface SessionState {
  presets: string[];
  selectedPreset: string;
  originalUrl: string | null;
  originalName: string | null;
  phase: Phase;
  jobId: string | null;
  /** preset the current/last job was submitted with */
  jobPreset: string | null;
  protectedUrl: string | null;
  displacement: DisplacementBar[];
  lpipsCost: number | null;
  error: string | null;
  /** network failure that deserves a retry affordance */
  retryable: boolean;
}

export type SessionEvent =
  | { type: "presets-loaded"; presets: string[]; defaultPreset: string }
  | { type: "file-selected"; url: string; name: string }
  | { type: "preset-selected"; preset: string }
  | { type: "submit-started"; preset: string }
  | { type: "job-accepted"; jobId: string }
  | { type: "job-status"; state: "queued" | "running" }
  | {
      type: "job-done";
      protectedUrl: string;
      displacement: Record<string, number>;
      lpipsCost: number;
    }
  | { type: "job-failed"; error: string }
  | { type: "network-error"; message: string };

export const INFLIGHT_PHASES: Phase[] = ["uploading", "queued", "running"];

export function initialState(): SessionState {
  return {
    presets: ["small", "standard", "large"],
    selectedPreset: "standard",
    originalUrl: null,
    originalName: null,
    phase: "idle",
    jobId: null,
    jobPreset: null,
    protectedUrl: null,
    displacement: [],
    lpipsCost: null,
    error: null,
    retryable: false,
  };
}

export function reduce(state: SessionState, event: SessionEvent): SessionState {
  switch (event.type) {
    case "presets-loaded": {
      const selected = event.presets.includes(state.selectedPreset)
        ? state.selectedPreset
        : event.defaultPreset;
      return { ...state, presets: event.presets, selectedPreset: selected };
    }

    case "file-selected":
      // a new photo drops every previous result
      return {
        ...initialState(),
        presets: state.presets,
        selectedPreset: state.selectedPreset,
        originalUrl: event.url,
        originalName: event.name,
      };

    case "preset-selected": {
      if (!state.presets.includes(event.preset)) return state;
      if (INFLIGHT_PHASES.includes(state.phase)) return state; // one job at a time
      return { ...state, selectedPreset: event.preset, error: null, retryable: false };
    }

    case "submit-started":
      if (state.originalUrl === null) return state;
      if (INFLIGHT_PHASES.includes(state.phase)) return state;
      return {
        ...state,
        phase: "uploading",
        jobId: null,
        jobPreset: event.preset,
        protectedUrl: null,
        displacement: [],
        lpipsCost: null,
        error: null,
        retryable: false,
      };

    case "job-accepted":
      if (state.phase !== "uploading") return state;
      return { ...state, phase: "queued", jobId: event.jobId };

    case "job-status":
      if (state.phase !== "queued" && state.phase !== "running") return state;
      return { ...state, phase: event.state };

    case "job-done":
      if (!INFLIGHT_PHASES.includes(state.phase)) return state;
      return {
        ...state,
        phase: "done",
        protectedUrl: event.protectedUrl,
        displacement: Object.entries(event.displacement)
          .map(([modelId, value]) => ({ modelId, value }))
          .sort((a, b) => a.modelId.localeCompare(b.modelId)),
        lpipsCost: event.lpipsCost,
      };

    case "job-failed":
      if (!INFLIGHT_PHASES.includes(state.phase)) return state;
      return { ...state, phase: "failed", error: event.error, retryable: false };

    case "network-error":
      return {
        ...state,
        phase: state.originalUrl === null ? "idle" : "failed",
        error: event.message,
        retryable: true,
      };
  }
}

/** Protected preview is stale once the selected preset no longer matches
 * the preset that produced it. */
export function protectedPreviewVisible(state: SessionState): boolean {
  return (
    state.phase === "done" &&
    state.protectedUrl !== null &&
    state.jobPreset === state.selectedPreset
  );
}

export function downloadEnabled(state: SessionState): boolean {
  return protectedPreviewVisible(state);
}

export function canSubmit(state: SessionState): boolean {
  return state.originalUrl !== null && !INFLIGHT_PHASES.includes(state.phase);
}

/** Trade-off copy for the magnitude selector: stronger protection means a
 * more visible perturbation. */
export function presetDescription(preset: string): string {
  switch (preset) {
    case "small":
      return "Gentler look, weaker protection: the perceptual penalty is raised, so the filter stays subtler but recognizers recover more matches.";
    case "large":
      return "Strongest protection, most visible change: twice the attack steps push embeddings further at a visible cost.";
    case "standard":
      return "Balanced default: strong protection with modest visible change.";
    default:
      return "Custom attack settings.";
  }
}
