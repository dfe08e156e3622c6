// API payloads, mirroring the session service schemas.

export interface ItemRef {
  id: string;
  display_url?: string | null;
}

export interface PointRef {
  coords: number[];
}

export interface QueryOut {
  nonce: string;
  kind: "items" | "points";
  a: ItemRef | PointRef;
  b: ItemRef | PointRef;
}

export interface TopItem {
  id: string;
  prob: number;
}

export interface DiscreteBeliefSummary {
  kind: "discrete";
  top: TopItem[];
  entropy: number;
}

export interface ContinuousBeliefSummary {
  kind: "continuous";
  region_center: number[];
  region_edge: number;
  depth: number;
  region_mass: number;
  stage: number;
  queries_in_stage: number;
}

export interface TerminalOut {
  found: boolean;
  target_id?: string | null;
  steps?: number | null;
  region_center?: number[] | null;
  region_edge?: number | null;
  depth?: number | null;
  queries?: number | null;
}

export interface SessionState {
  session_id: string;
  mode: "continuous" | "discrete";
  pending: QueryOut | null;
  terminal: TerminalOut | null;
  belief: DiscreteBeliefSummary | ContinuousBeliefSummary;
  history_length: number;
  created_at: number;
  updated_at: number;
  stage_log?: Record<string, unknown>[] | null;
}

export interface ItemSpec {
  id: string;
  vector: number[];
  display_url?: string | null;
}

export interface CreateSessionRequest {
  mode: "continuous" | "discrete";
  items?: ItemSpec[];
  config?: Record<string, unknown>;
}

export interface AnswerRequest {
  nonce: string;
  choice: string;
  is_target?: boolean;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
