/**
 * Payload types mirroring the review service API, field for field.
 *
 * The console is a thin client: these records arrive from the server and
 * are rendered as-is.  Nothing in the console recomputes labels, error
 * estimates, or budget arithmetic from them.
 */

/** One run as listed by `GET /runs` and `GET /runs/{id}`. */
export interface RunSummary {
  run_id: string;
  stage: string;
  n_items: number;
  rule: string;
  review_mode: string;
  budget: number | null;
  reviews_used: number;
  pending: number;
}

/** Item content as stored in the dataset; a tagged union on `kind`. */
export interface ItemContent {
  kind: string;
  text?: string;
  path?: string;
  question?: string;
  values?: number[];
  [extra: string]: unknown;
}

/** One pending card from `GET /runs/{id}/queue`. */
export interface QueueItem {
  item_id: number;
  content_kind: string;
  content: ItemContent;
  label_space: string[];
  machine_label: number | null;
  machine_label_name: string | null;
  machine_reasoning: string | null;
  critic_reasoning: string | null;
  error_estimate: number | null;
  decision: string | null;
  perplexity: number | null;
}

/** A page of the pending queue, most suspect items first. */
export interface QueuePage {
  run_id: string;
  stage: string;
  page: number;
  page_size: number;
  total_pending: number;
  budget: number;
  reviews_used: number;
  items: QueueItem[];
}

/** Body of `POST /runs/{id}/reviews`. */
export interface ReviewRequest {
  item_id: number;
  label: number;
  reviewer: string;
}

/** Server acknowledgement of an accepted review. */
export interface ReviewAccepted {
  run_id: string;
  item_id: number;
  stage: string;
  reviews_used: number;
  pending: number;
}

/** One corrected record inside the export bundle. */
export interface CorrectedEntry {
  item_id: number;
  final_label: number;
  source: string;
  [extra: string]: unknown;
}

/** Payload of `GET /runs/{id}/export`. */
export interface ExportPayload {
  run_id: string;
  metrics: Record<string, unknown>;
  corrected: CorrectedEntry[];
}

/** Progress numbers shown in the header bar — always server-reported. */
export interface Progress {
  stage: string;
  budget: number;
  reviews_used: number;
  pending: number;
}
