// Wire types mirroring the server's REST/WebSocket contract.

export interface BusEvent {
  seq: number;
  session_id: string;
  topic: string;
  payload: Record<string, any>;
  ts: number;
}

export interface EventFrame {
  type: 'event';
  event: BusEvent;
}

export interface ChunkFrame {
  type: 'chunk';
  seq: number;
  index: number;
  text: string;
}

export type StreamFrame = EventFrame | ChunkFrame;

export interface SessionState {
  session_id: string;
  game_id: string;
  chapter_cursor: number;
  anchor_values: Record<string, number | string>;
  goal_status: Record<string, string>;
  subgoal_status: Record<string, string>;
  turn: number;
  ended: boolean;
  ending_summary: string | null;
  last_seq: number;
  last_progress_turn: number;
}

export interface SceneRegion {
  entity_id: string;
  region: [number, number, number, number];
  local_prompt: string;
  reference_asset: string | null;
}

export interface SceneDescriptor {
  turn: number;
  global_prompt: string;
  modality: string;
  regions: SceneRegion[];
}

export interface RoundResult {
  session_id: string;
  turn: number;
  events: { seq: number; topic: string; payload: Record<string, any>; ts: number }[];
  npc_actions: Record<string, any>[];
  state_changes: Record<string, any>[];
  new_beats: Record<string, any>[];
  goal_events: Record<string, any>[];
  scene: SceneDescriptor | null;
  ended: boolean;
  ending_summary: string | null;
}

export interface GameSummary {
  game_id: string;
  title: string;
  genre: string;
  chapters: number;
  npcs: number;
}

export interface CopilotJob {
  job_id: string;
  seed_text: string;
  status: 'running' | 'needs_input' | 'complete' | 'failed';
  stage_outputs: Record<string, string>;
  failed_stage: string | null;
  notes: string[];
  final: Record<string, any> | null;
}

export interface ValidationIssue {
  severity?: string;
  path: string;
  message: string;
}
