// Payload shapes of the JSON API under /api/v1.

export type SessionStatus = "active" | "found" | "exhausted" | "capped";
export type SessionMode = "sandbox" | "live";

export interface ItemPayload {
  id: string;
  split: string;
  labels: Record<string, string>;
  features: number[];
}

export interface MetaPayload {
  attributes: { name: string; values: string[] }[];
  n_items: number;
  strategies: string[];
  default_strategy: string;
  k_cand: number;
  max_steps: number;
}

export interface ItemListPayload {
  total: number;
  offset: number;
  items: ItemPayload[];
}

/** Target-derived fields are present only in sandbox mode. */
export interface SessionPayload {
  session_id: string;
  mode: SessionMode;
  strategy: string;
  status: SessionStatus;
  step: number;
  max_steps: number;
  query: string;
  query_item: ItemPayload;
  query_history: string[];
  created_at: string;
  target?: string;
  target_item?: ItemPayload;
  initial_rank?: number;
  target_rank?: number;
  rank_curve?: number[];
}

export interface CandidateCard {
  attribute: string;
  item: ItemPayload;
  target_distance?: number;
}

export interface CandidatesPayload {
  session_id: string;
  step: number;
  status: SessionStatus;
  query: string;
  candidates: CandidateCard[];
  query_target_distance?: number;
}

export interface RoundRecord {
  step: number;
  presented: { attribute: string; id: string }[];
  accepted: string[];
  chosen: string | null;
  query_after: string;
  status: SessionStatus;
  pools?: Record<string, string[]>;
  rank_after?: number;
}

export interface ChoiceResult {
  round: RoundRecord;
  session: SessionPayload;
}

export interface HistoryPayload {
  query: string;
  target?: string;
  strategy: string;
  k_cand: number;
  max_steps: number;
  steps: number;
  status: SessionStatus;
  initial_rank?: number;
  rounds: RoundRecord[];
}

export interface RankPayload {
  target: string;
  target_rank: number;
  initial_rank: number;
  rank_curve: number[];
}

export interface CreateSessionRequest {
  query?: string;
  strategy?: string;
  mode?: SessionMode;
  target?: string;
  seed?: number;
  k_cand?: number;
  max_steps?: number;
}
