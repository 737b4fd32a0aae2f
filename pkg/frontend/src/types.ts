// Wire types mirroring the service JSON bodies.

export type PartName = "outer" | "upper" | "lower" | "full" | "feet" | "accessory";

export const MAIN_PARTS: PartName[] = ["outer", "upper", "lower", "full", "feet"];
export const MAX_ACCESSORIES = 3;

export interface ItemInfo {
  id: string;
  category: string;
  part: PartName;
  hybrid: boolean;
  name: string;
  colors: number[][] | null;
}

export interface Closet {
  id: string;
  name: string;
  item_ids: string[];
  created_at: number;
  updated_at: number;
}

export interface Score {
  positive_probability: number;
  predicted_label: boolean;
}

export interface RecommendedOutfit {
  rank: number;
  score: number;
  configuration: number;
  slots: Partial<Record<PartName, string>>;
  accessories: string[];
}

export interface RecommendResponse {
  method: string;
  seed: number;
  outfits: RecommendedOutfit[];
}

export interface RecommendRequest {
  pool: string[];
  method: string;
  beam_width: number;
  top_k: number;
  seed: number;
}

export const METHODS = ["partial_bs", "ordered_bs", "orderless_bs", "baseline"] as const;

export const CONFIGURATION_LABELS: Record<number, string> = {
  1: "outer+upper+lower",
  2: "upper+lower",
  3: "outer+full",
  4: "full",
};
