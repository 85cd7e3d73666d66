// Seq-ordered transcript of a session: a pure projection of the event log.
// Reconnect replays are deduplicated by seq, so the rendered transcript is
// identical to an uninterrupted run.

import { BusEvent, ChunkFrame } from './types.js';

export type TranscriptKind =
  | 'player' | 'dialogue' | 'physical' | 'state' | 'goal'
  | 'chapter' | 'beat' | 'asset' | 'ended';

export interface TranscriptItem {
  seq: number;
  kind: TranscriptKind;
  speaker?: string;
  text: string;
  pending: boolean; // true while only chunks have arrived
  payload: Record<string, any>;
}

const TOPIC_KIND: Record<string, TranscriptKind> = {
  player_action: 'player',
  state_updated: 'state',
  goal_achieved: 'goal',
  chapter_advanced: 'chapter',
  narrative_injected: 'beat',
  asset_updated: 'asset',
  session_ended: 'ended',
};

export function itemText(event: BusEvent): { kind: TranscriptKind; speaker?: string; text: string } {
  const p = event.payload;
  switch (event.topic) {
    case 'player_action':
      return { kind: 'player', speaker: 'You', text: String(p.utterance ?? '') };
    case 'npc_action':
      if (p.kind === 'dialogue') {
        return { kind: 'dialogue', speaker: String(p.dialogue?.speaker ?? p.actor), text: String(p.dialogue?.text ?? '') };
      }
      return {
        kind: 'physical',
        speaker: String(p.actor ?? ''),
        text: `${p.physical?.verb ?? ''}${p.physical?.target ? ` (${p.physical.target})` : ''}`,
      };
    case 'state_updated':
      return { kind: 'state', text: `${p.anchor_id}: ${p.old} → ${p.new}` };
    case 'goal_achieved':
      return { kind: 'goal', text: `Goal achieved: ${p.goal_id}` };
    case 'chapter_advanced':
      return { kind: 'chapter', text: `Chapter: ${p.chapter_id}` };
    case 'narrative_injected':
      return { kind: 'beat', text: `[${p.beat?.kind}] ${p.beat?.text ?? ''}` };
    case 'asset_updated':
      return { kind: 'asset', text: `${p.entity_id} ${p.modality} v${p.version}` };
    case 'session_ended':
      return { kind: 'ended', text: p.ending_summary ? String(p.ending_summary) : 'The session has ended.' };
    default:
      return { kind: TOPIC_KIND[event.topic] ?? 'state', text: event.topic };
  }
}

export class TranscriptStore {
  private items = new Map<number, TranscriptItem>();
  private order: number[] = [];
  private listeners: (() => void)[] = [];
  lastSeq = 0;

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  /** Progressive dialogue chunks render as a pending item until the
   *  authoritative event frame lands. */
  applyChunk(chunk: ChunkFrame): void {
    const existing = this.items.get(chunk.seq);
    if (existing && !existing.pending) return; // event already final
    if (existing) {
      existing.text = chunk.index === 0 ? chunk.text : existing.text + chunk.text;
    } else {
      this.insert({
        seq: chunk.seq, kind: 'dialogue', speaker: '…',
        text: chunk.text, pending: true, payload: {},
      });
    }
    this.notify();
  }

  applyEvent(event: BusEvent): void {
    const existing = this.items.get(event.seq);
    const { kind, speaker, text } = itemText(event);
    if (existing) {
      // finalize a chunked bubble or ignore a replayed duplicate
      if (!existing.pending) return;
      existing.kind = kind;
      existing.speaker = speaker;
      existing.text = text;
      existing.pending = false;
      existing.payload = event.payload;
    } else {
      this.insert({ seq: event.seq, kind, speaker, text, pending: false, payload: event.payload });
    }
    if (event.seq > this.lastSeq) this.lastSeq = event.seq;
    this.notify();
  }

  private insert(item: TranscriptItem): void {
    this.items.set(item.seq, item);
    // seqs normally arrive in order; binary-insert keeps replays safe
    let lo = 0, hi = this.order.length;
    while (lo < hi) {
      const mid = (lo + hi) >> 1;
      if (this.order[mid] < item.seq) lo = mid + 1; else hi = mid;
    }
    this.order.splice(lo, 0, item.seq);
  }

  all(): TranscriptItem[] {
    return this.order.map((seq) => this.items.get(seq)!);
  }

  bubbles(): TranscriptItem[] {
    return this.all().filter((i) => ['player', 'dialogue', 'physical', 'beat', 'ended'].includes(i.kind));
  }

  seqs(): number[] {
    return [...this.order];
  }
}
