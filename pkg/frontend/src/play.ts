// The gameplay loop: submit rounds over REST, render the event stream,
// keep exactly one round in flight, and show the ending screen on
// session_ended.

import { ApiClient, BusyError } from './api.js';
import { StatusPanelModel, GoalTrackerModel } from './status.js';
import { StreamClient, StreamOptions } from './stream.js';
import { TranscriptStore } from './transcript.js';
import { SceneDescriptor, SessionState } from './types.js';

export interface PlayView {
  inputEnabled: boolean;
  ended: boolean;
  endingSummary: string | null;
  scene: SceneDescriptor | null;
  beatBanner: string | null;
}

export class PlayController {
  readonly transcript = new TranscriptStore();
  readonly status = new StatusPanelModel();
  readonly goals = new GoalTrackerModel();
  private stream: StreamClient | null = null;
  private inFlight = false;
  private view: PlayView = {
    inputEnabled: true, ended: false, endingSummary: null, scene: null, beatBanner: null,
  };
  private listeners: (() => void)[] = [];

  constructor(private api: ApiClient, private wsBase: string,
              private sessionId: string,
              private streamOptions: StreamOptions = {}) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  current(): PlayView {
    return { ...this.view };
  }

  async start(gameDoc: Record<string, any>, state: SessionState): Promise<void> {
    this.goals.loadGame(gameDoc as any);
    this.goals.loadState(state);
    this.status.loadState(state);
    this.view.ended = state.ended;
    this.view.endingSummary = state.ending_summary;
    this.view.inputEnabled = !state.ended;
    this.stream = new StreamClient(this.wsBase, this.sessionId, this.streamOptions, 1);
    this.stream.onFrame = (frame) => {
      if (frame.type === 'chunk') {
        this.transcript.applyChunk(frame);
      } else {
        this.transcript.applyEvent(frame.event);
        this.status.applyEvent(frame.event);
        if (frame.event.topic === 'narrative_injected') {
          this.view.beatBanner = String(frame.event.payload.beat?.text ?? '');
        }
        if (frame.event.topic === 'session_ended') {
          this.view.ended = true;
          this.view.endingSummary = frame.event.payload.ending_summary ?? null;
          this.view.inputEnabled = false;
        }
      }
      this.notify();
    };
    this.stream.connect();
    this.notify();
  }

  /** Single-flight: input stays disabled until the round response lands. */
  async submit(utterance: string): Promise<void> {
    if (this.inFlight || this.view.ended || !utterance.trim()) return;
    this.inFlight = true;
    this.view.inputEnabled = false;
    this.notify();
    try {
      const result = await this.api.runRound(this.sessionId, utterance);
      if (result.scene) this.view.scene = result.scene;
      const state = await this.api.sessionState(this.sessionId);
      this.goals.loadState(state);
      if (result.ended) {
        this.view.ended = true;
        this.view.endingSummary = result.ending_summary;
      }
    } catch (error) {
      if (!(error instanceof BusyError)) throw error;
      // server-side round still in flight; keep input disabled, it will
      // re-enable when the next submit attempt succeeds
    } finally {
      this.inFlight = false;
      this.view.inputEnabled = !this.view.ended;
      this.notify();
    }
  }

  lastSeenSeq(): number {
    return this.stream?.lastSeenSeq() ?? 0;
  }

  dropConnection(): void {
    this.stream?.dropConnection();
  }

  stop(): void {
    this.stream?.close();
  }
}
