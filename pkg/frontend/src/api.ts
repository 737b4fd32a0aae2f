import type {
  Closet,
  ItemInfo,
  RecommendRequest,
  RecommendResponse,
  Score,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let detail = `HTTP ${resp.status}`;
    try {
      const body = await resp.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      // leave the generic status text
    }
    throw new ApiError(resp.status, detail);
  }
  if (resp.status === 204) return undefined as T;
  return (await resp.json()) as T;
}

/** Typed client for the closet service. All scores come from here. */
export class ServiceClient {
  constructor(public baseUrl: string) {}

  listItems(part?: string): Promise<ItemInfo[]> {
    const q = part ? `?part=${encodeURIComponent(part)}` : "";
    return request(`${this.baseUrl}/items${q}`);
  }

  listClosets(): Promise<Closet[]> {
    return request(`${this.baseUrl}/closets`);
  }

  createCloset(name: string, itemIds: string[] = []): Promise<Closet> {
    return request(`${this.baseUrl}/closets`, {
      method: "POST",
      body: JSON.stringify({ name, item_ids: itemIds }),
    });
  }

  deleteCloset(id: string): Promise<void> {
    return request(`${this.baseUrl}/closets/${id}`, { method: "DELETE" });
  }

  updateClosetItems(id: string, add: string[], remove: string[]): Promise<Closet> {
    return request(`${this.baseUrl}/closets/${id}/items`, {
      method: "POST",
      body: JSON.stringify({ add, remove }),
    });
  }

  score(slots: Record<string, string>, accessories: string[], allowPartial = true): Promise<Score> {
    return request(`${this.baseUrl}/score`, {
      method: "POST",
      body: JSON.stringify({ slots, accessories, allow_partial: allowPartial }),
    });
  }

  recommend(req: RecommendRequest): Promise<RecommendResponse> {
    return request(`${this.baseUrl}/recommend`, {
      method: "POST",
      body: JSON.stringify(req),
    });
  }
}
