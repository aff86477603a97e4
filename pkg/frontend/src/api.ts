/** Typed client for the field service's documented endpoints. */

export interface Summary {
  gp_count: number;
  superpoint_counts: Record<string, number>;
  d_sem: number;
  progressive: boolean;
  views: number[];
}

export interface PickResponse {
  gp_index: number;
  level: number;
  superpoint_id: number;
  chain: Record<string, number>;
  member_count: number;
  bbox: { min: number[]; max: number[] };
}

export interface SelectedSuperpoint {
  id: number;
  score: number;
}

export interface QueryResponse {
  selected: Record<string, SelectedSuperpoint[]>;
  gp_count: number;
  gp_indices?: number[];
}

export interface QueryRequest {
  embedding?: number[];
  text?: string;
  canonicals?: number[][];
  levels: number[];
  threshold?: number;
  top_k?: number;
  include_gps?: boolean;
}

export interface PointsPayload {
  positions: Float32Array;
  ids: Uint32Array;
}

export interface ServiceErrorBody {
  code: string;
  message: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: ServiceErrorBody,
  ) {
    super(`${detail.code}: ${detail.message}`);
  }
}

export class NetworkError extends Error {}

async function throwServiceError(response: Response): Promise<never> {
  let detail: ServiceErrorBody = { code: "unknown", message: response.statusText };
  try {
    const body = await response.json();
    if (body && body.error) detail = body.error as ServiceErrorBody;
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(response.status, detail);
}

export class FieldApi {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async getJson<T>(path: string): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path);
    } catch (err) {
      throw new NetworkError(`service unreachable: ${err}`);
    }
    if (!response.ok) await throwServiceError(response);
    return (await response.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(`service unreachable: ${err}`);
    }
    if (!response.ok) await throwServiceError(response);
    return (await response.json()) as T;
  }

  summary(): Promise<Summary> {
    return this.getJson<Summary>("/scene/summary");
  }

  /** Decimated centroids plus level-q superpoint ids (binary payload). */
  async points(level: number, stride: number): Promise<PointsPayload> {
    let response: Response;
    try {
      response = await this.fetchFn(
        `${this.baseUrl}/points?level=${level}&stride=${stride}`,
      );
    } catch (err) {
      throw new NetworkError(`service unreachable: ${err}`);
    }
    if (!response.ok) await throwServiceError(response);
    const buffer = await response.arrayBuffer();
    const count = new DataView(buffer).getUint32(0, true);
    const positions = new Float32Array(buffer, 4, count * 3);
    const ids = new Uint32Array(buffer, 4 + count * 12, count);
    return { positions, ids };
  }

  pick(body: {
    point?: number[];
    view?: number;
    pixel?: number[];
    level: number;
  }): Promise<PickResponse> {
    return this.postJson<PickResponse>("/pick", body);
  }

  query(body: QueryRequest): Promise<QueryResponse> {
    return this.postJson<QueryResponse>("/query", body);
  }

  async superpointMembers(level: number, id: number): Promise<number[]> {
    const payload = await this.getJson<{ members: number[] }>(
      `/superpoint/${level}/${id}/members`,
    );
    return payload.members;
  }
}
