// Status panel and goal tracker models: anchors with change highlights,
// per-subgoal check marks mirroring the server state exactly.

import { BusEvent, SessionState } from './types.js';

export interface AnchorRow {
  anchorId: string;
  value: number | string;
  changed: boolean; // changed during the latest round
}

export interface SubgoalRow {
  subgoalId: string;
  description: string;
  achieved: boolean;
}

export interface GoalRow {
  goalId: string;
  text: string;
  achieved: boolean;
  subgoals: SubgoalRow[];
}

export class StatusPanelModel {
  private values: Record<string, number | string> = {};
  private recentlyChanged = new Set<string>();

  loadState(state: SessionState): void {
    this.values = { ...state.anchor_values };
  }

  beginRound(): void {
    this.recentlyChanged.clear();
  }

  applyEvent(event: BusEvent): void {
    if (event.topic === 'player_action') {
      this.beginRound();
    } else if (event.topic === 'state_updated') {
      this.values[event.payload.anchor_id] = event.payload.new;
      this.recentlyChanged.add(event.payload.anchor_id);
    }
  }

  rows(): AnchorRow[] {
    return Object.keys(this.values).sort().map((anchorId) => ({
      anchorId,
      value: this.values[anchorId],
      changed: this.recentlyChanged.has(anchorId),
    }));
  }
}

interface GameDoc {
  game: {
    chapters: {
      chapter_id: string;
      order_index: number;
      goals: {
        goal_id: string;
        creator_text: string;
        subgoals: { subgoal_id: string; description: string }[];
      }[];
    }[];
  };
}

export class GoalTrackerModel {
  private chapters: GameDoc['game']['chapters'] = [];
  private goalStatus: Record<string, string> = {};
  private subgoalStatus: Record<string, string> = {};
  private cursor = 0;

  loadGame(doc: GameDoc): void {
    this.chapters = doc.game.chapters;
  }

  /** Mirrors GET /sessions/{id}/state; no client-side inference. */
  loadState(state: SessionState): void {
    this.goalStatus = state.goal_status;
    this.subgoalStatus = state.subgoal_status;
    this.cursor = state.chapter_cursor;
  }

  currentChapterId(): string | null {
    const chapter = this.chapters.find((c) => c.order_index === this.cursor);
    return chapter ? chapter.chapter_id : null;
  }

  rows(): GoalRow[] {
    const chapter = this.chapters.find((c) => c.order_index === this.cursor);
    if (!chapter) return [];
    return chapter.goals.map((goal) => ({
      goalId: goal.goal_id,
      text: goal.creator_text,
      achieved: this.goalStatus[goal.goal_id] === 'achieved',
      subgoals: goal.subgoals.map((sub) => ({
        subgoalId: sub.subgoal_id,
        description: sub.description,
        achieved: this.subgoalStatus[sub.subgoal_id] === 'achieved',
      })),
    }));
  }
}
