/**
 * Typed client for the inference service. All server interaction goes
 * through here; the UI never touches checkpoints or files directly.
 *
 * Concurrency: one request in flight at a time. Submitting while a
 * request is pending aborts the pending one (cancel wins).
 */

export interface PredictOptions {
  return_saliency?: boolean;
  seed?: number;
  n_masks?: number;
}

export interface PredictRequestBody {
  image: string | number[][];
  prompt?: string | number[][] | null;
  options?: PredictOptions;
}

export interface SaliencyPayload {
  array: number[][];
  pgm_base64: string;
}

export interface PredictResponse {
  path_used: "prompted" | "non-prompted";
  class_index?: number;
  probabilities?: number[];
  saliency?: SaliencyPayload;
  timing_ms: { decode: number; inference: number; total: number };
}

export interface HealthResponse {
  status: string;
  checkpoint_id: string | null;
  config_hash: string;
}

export type DatasetListing = Record<string, number[]>;

/** Error carrying the HTTP status and the server's diagnostic id, if any. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly diagnosticId?: string,
  ) {
    super(message);
  }
}

export class RequestCancelled extends Error {
  constructor() {
    super("request cancelled by a newer submission");
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private inFlight: AbortController | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") {
        throw new RequestCancelled();
      }
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // non-JSON body; fall through with null
    }
    if (!response.ok) {
      const record = (body ?? {}) as { error?: string; diagnostic_id?: string };
      throw new ApiError(
        response.status,
        record.error ?? `request failed with status ${response.status}`,
        record.diagnostic_id,
      );
    }
    return body as T;
  }

  /** POST a prediction; aborts any still-pending prediction first. */
  private async post(path: string, body: PredictRequestBody): Promise<PredictResponse> {
    this.inFlight?.abort();
    const controller = new AbortController();
    this.inFlight = controller;
    try {
      return await this.request<PredictResponse>(path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
        signal: controller.signal,
      });
    } finally {
      if (this.inFlight === controller) this.inFlight = null;
    }
  }

  predict(body: PredictRequestBody): Promise<PredictResponse> {
    return this.post("/predict", body);
  }

  refine(body: PredictRequestBody): Promise<PredictResponse> {
    return this.post("/refine", body);
  }

  health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/health");
  }

  datasetListing(): Promise<DatasetListing> {
    return this.request<DatasetListing>("/dataset");
  }

  async datasetImage(split: string, index: number): Promise<string> {
    const body = await this.request<{ image_base64: string }>(`/dataset/${split}/${index}`);
    return body.image_base64;
  }
}
