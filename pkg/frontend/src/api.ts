// Thin REST client over the engine's HTTP surface.

import {
  CopilotJob,
  GameSummary,
  RoundResult,
  SessionState,
  ValidationIssue,
} from './types.js';

export class ApiError extends Error {
  constructor(public status: number, public body: any) {
    super(`HTTP ${status}`);
  }
}

export class BusyError extends ApiError {}
export class SessionClosedError extends ApiError {}

export class ApiClient {
  constructor(private baseUrl: string,
              private fetchFn: typeof fetch = fetch.bind(globalThis)) {}

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? {} : { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    const data = text ? JSON.parse(text) : null;
    if (!response.ok) {
      if (response.status === 409 && data?.error === 'round in flight') {
        throw new BusyError(response.status, data);
      }
      if (response.status === 409 && data?.error === 'session_closed') {
        throw new SessionClosedError(response.status, data);
      }
      throw new ApiError(response.status, data);
    }
    return data;
  }

  listGames(): Promise<{ games: GameSummary[] }> {
    return this.request('GET', '/games');
  }

  getGame(gameId: string): Promise<Record<string, any>> {
    return this.request('GET', `/games/${gameId}`);
  }

  /** Publish a full game document; 422 surfaces per-path issues. */
  async publishGame(document: Record<string, any>):
      Promise<{ game_id: string } | { issues: ValidationIssue[] }> {
    return this.request('POST', '/games', document);
  }

  createSession(gameId: string, sessionId?: string):
      Promise<{ session_id: string; state: SessionState }> {
    return this.request('POST', '/sessions',
                        sessionId ? { game_id: gameId, session_id: sessionId }
                                  : { game_id: gameId });
  }

  runRound(sessionId: string, utterance: string): Promise<RoundResult> {
    return this.request('POST', `/sessions/${sessionId}/rounds`, { utterance });
  }

  sessionState(sessionId: string): Promise<SessionState> {
    return this.request('GET', `/sessions/${sessionId}/state`);
  }

  endSession(sessionId: string): Promise<{ ended: boolean }> {
    return this.request('DELETE', `/sessions/${sessionId}`);
  }

  createCopilotJob(seed: string, templateId?: string): Promise<CopilotJob> {
    return this.request('POST', '/copilot/jobs',
                        templateId ? { seed, template_id: templateId } : { seed });
  }

  getCopilotJob(jobId: string): Promise<CopilotJob> {
    return this.request('GET', `/copilot/jobs/${jobId}`);
  }

  resumeCopilotJob(jobId: string, stageOutputs: Record<string, string>): Promise<CopilotJob> {
    return this.request('POST', `/copilot/jobs/${jobId}/resume`,
                        { stage_outputs: stageOutputs });
  }
}
