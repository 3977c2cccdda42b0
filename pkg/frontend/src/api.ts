// Typed client for the inference service HTTP API.

export type ClassLabel = "spill" | "no_spill";

export interface Verdict {
  label: ClassLabel;
  confidence: number;
  latency_ms: number;
  frame_ref: number;
  timestamp: string;
}

export interface CaptureResult {
  pair_index: number;
  thermal_path: string;
  rgb_path: string;
  verdict: Verdict;
}

export interface Health {
  model: string;
  modality: string;
  uptime_s: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!resp.ok) {
      throw new ServiceError(resp.status, await resp.text());
    }
    return (await resp.json()) as T;
  }

  health(): Promise<Health> {
    return this.request<Health>("/health");
  }

  async startSession(room: string, liquid: string): Promise<string> {
    const body = await this.request<{ session_id: string }>("/session/start", {
      method: "POST",
      body: JSON.stringify({ room, liquid }),
    });
    return body.session_id;
  }

  async setLabel(classLabel: ClassLabel): Promise<void> {
    await this.request("/session/label", {
      method: "POST",
      body: JSON.stringify({ class_label: classLabel }),
    });
  }

  capture(): Promise<CaptureResult> {
    return this.request<CaptureResult>("/capture", { method: "POST" });
  }

  async latestVerdict(): Promise<Verdict | null> {
    try {
      return await this.request<Verdict>("/verdict/latest");
    } catch (err) {
      if (err instanceof ServiceError && err.status === 404) return null;
      throw err;
    }
  }

  async recordOutcome(frameRef: number, groundTruth: ClassLabel): Promise<number | null> {
    const body = await this.request<{ demo_accuracy: number | null }>("/demo/outcome", {
      method: "POST",
      body: JSON.stringify({ frame_ref: frameRef, ground_truth: groundTruth }),
    });
    return body.demo_accuracy;
  }
}
