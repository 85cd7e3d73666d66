// The copilot authoring flow: seed in, job polled, needs_input stages
// edited inline, finished definitions published to the game list.

import { ApiClient, ApiError } from './api.js';
import { CopilotJob, ValidationIssue } from './types.js';

export type BuildPhase = 'idle' | 'running' | 'needs_input' | 'failed' | 'publishing' | 'published';

export interface BuildView {
  phase: BuildPhase;
  job: CopilotJob | null;
  editableStage: string | null;
  editableText: string;
  notes: string[];
  validationIssues: ValidationIssue[];
  publishedGameId: string | null;
}

export class BuildFlowController {
  private view: BuildView = {
    phase: 'idle', job: null, editableStage: null, editableText: '',
    notes: [], validationIssues: [], publishedGameId: null,
  };
  private listeners: (() => void)[] = [];

  constructor(private api: ApiClient) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  current(): BuildView {
    return { ...this.view };
  }

  private absorb(job: CopilotJob): void {
    this.view.job = job;
    this.view.notes = job.notes;
    if (job.status === 'needs_input') {
      this.view.phase = 'needs_input';
      this.view.editableStage = job.failed_stage;
      this.view.editableText = job.failed_stage ? (job.stage_outputs[job.failed_stage] ?? '') : '';
    } else if (job.status === 'complete') {
      this.view.phase = 'publishing';
    } else if (job.status === 'failed') {
      this.view.phase = 'failed';
    } else {
      this.view.phase = 'running';
    }
  }

  async submitSeed(seed: string, templateId?: string): Promise<void> {
    this.view = { ...this.view, phase: 'running', validationIssues: [], publishedGameId: null };
    this.notify();
    this.absorb(await this.api.createCopilotJob(seed, templateId));
    this.notify();
    if (this.current().phase === 'publishing') await this.publish();
  }

  /** Resume a paused job with the human-edited stage output. */
  async resumeWithEdit(editedText: string): Promise<void> {
    const job = this.view.job;
    const stage = this.view.editableStage;
    if (!job || !stage) return;
    this.view.phase = 'running';
    this.notify();
    this.absorb(await this.api.resumeCopilotJob(job.job_id, { [stage]: editedText }));
    this.notify();
    if (this.current().phase === 'publishing') await this.publish();
  }

  private async publish(): Promise<void> {
    const final = this.view.job?.final;
    if (!final) return;
    try {
      const result = await this.api.publishGame(final);
      this.view.publishedGameId = (result as { game_id: string }).game_id;
      this.view.phase = 'published';
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        this.view.validationIssues = error.body?.issues ?? [];
        this.view.phase = 'needs_input';
      } else {
        throw error;
      }
    }
    this.notify();
  }
}
