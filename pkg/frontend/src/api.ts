/** Client for the protection service API. Every request goes to the one
 * configured base URL; image bytes never travel anywhere else. */

export interface PresetInfo {
  presets: string[];
  default: string;
}

export interface JobStatus {
  job_id: string;
  state: "queued" | "running" | "done" | "failed";
  preset: string;
  per_model_displacement?: Record<string, number>;
  lpips_cost?: number;
  error?: string;
}

/** 4xx/5xx from the service; `detail` is rendered verbatim. */
export class ServiceError extends Error {
  constructor(public status: number, public detail: string) {
    super(`service ${status}: ${detail}`);
  }
}

/** fetch-level failure (offline, DNS, CORS); the UI offers a retry. */
export class NetworkError extends Error {}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function expectOk(res: Response): Promise<Response> {
  if (res.ok) return res;
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (typeof body.detail === "string") detail = body.detail;
    else if (typeof body.error === "string") detail = body.error;
    else detail = JSON.stringify(body);
  } catch {
    /* non-JSON error body; keep statusText */
  }
  throw new ServiceError(res.status, detail);
}

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let res: Response;
    try {
      res = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new NetworkError(err instanceof Error ? err.message : String(err));
    }
    return expectOk(res);
  }

  async getPresets(): Promise<PresetInfo> {
    const res = await this.request("/v1/presets");
    return res.json();
  }

  /** Uploads the original file at full resolution; previews are a purely
   * local concern. */
  async submitProtect(image: Blob, preset: string, seed = 0): Promise<string> {
    const form = new FormData();
    form.append("image", image, "upload.png");
    form.append("preset", preset);
    form.append("seed", String(seed));
    const res = await this.request("/v1/protect", { method: "POST", body: form });
    const body = await res.json();
    return body.job_id;
  }

  async getJob(jobId: string): Promise<JobStatus> {
    const res = await this.request(`/v1/jobs/${jobId}`);
    return res.json();
  }

  async getResultBlob(jobId: string): Promise<Blob> {
    const res = await this.request(`/v1/jobs/${jobId}/result`);
    return res.blob();
  }

  /** Poll until the job leaves the queue; reports every status seen. */
  async pollUntilFinished(
    jobId: string,
    opts: {
      intervalMs?: number;
      timeoutMs?: number;
      onUpdate?: (status: JobStatus) => void;
      sleep?: (ms: number) => Promise<void>;
    } = {},
  ): Promise<JobStatus> {
    const interval = opts.intervalMs ?? 500;
    const timeout = opts.timeoutMs ?? 300_000;
    const sleep = opts.sleep ?? ((ms) => new Promise((r) => setTimeout(r, ms)));
    const start = Date.now();
    for (;;) {
      const status = await this.getJob(jobId);
      opts.onUpdate?.(status);
      if (status.state === "done" || status.state === "failed") return status;
      if (Date.now() - start >= timeout) {
        throw new NetworkError("timed out waiting for the job to finish");
      }
      await sleep(interval);
    }
  }
}
