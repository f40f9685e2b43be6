export interface EhrRow {
  name: string;
  value: number | null;
  units: string;
}

export interface SessionState {
  reviewer_id: string;
  case_set_id: string;
  total: number;
  completed: number;
  done: boolean;
}

export interface CasePayload {
  done: false;
  case_id: string;
  ehr: EhrRow[];
  progress: { index: number; total: number };
  video_url: string;
  annotated_url: string;
  fps: number;
  frame_count: number;
}

export interface SessionDone {
  done: true;
  total: number;
  completed: number;
}

export type NextCase = CasePayload | SessionDone;

export interface ResponseAck {
  recorded: boolean;
  case_id: string;
  completed: number;
  total: number;
  done: boolean;
}

export type Choice = "Alive" | "Dead";

export type VideoVariant = "raw" | "annotated";
