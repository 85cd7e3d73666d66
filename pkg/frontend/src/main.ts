// Browser bootstrap: game list, play view, and the copilot build flow.

import { ApiClient } from './api.js';
import { BuildFlowController } from './build.js';
import { PlayController } from './play.js';
import { renderGoalTracker, renderSceneCard, renderStatusPanel, renderTranscript } from './render.js';
import { sceneCard } from './scene.js';

const API_BASE = (window as any).ZAGII_API ?? '';
const WS_BASE = API_BASE
  ? API_BASE.replace(/^http/, 'ws')
  : `${location.protocol === 'https:' ? 'wss' : 'ws'}://${location.host}`;

const api = new ApiClient(API_BASE || '');

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

async function showGameList(): Promise<void> {
  const { games } = await api.listGames();
  const list = el<HTMLElement>('game-list');
  list.textContent = '';
  for (const game of games) {
    const row = document.createElement('button');
    row.className = 'game-row';
    row.textContent = `${game.title} (${game.genre}, ${game.npcs} NPCs)`;
    row.onclick = () => startPlay(game.game_id);
    list.appendChild(row);
  }
}

let controller: PlayController | null = null;

async function startPlay(gameId: string): Promise<void> {
  controller?.stop();
  const gameDoc = await api.getGame(gameId);
  const created = await api.createSession(gameId);
  controller = new PlayController(api, WS_BASE, created.session_id);

  const transcript = el<HTMLElement>('transcript');
  const status = el<HTMLElement>('status-panel');
  const goals = el<HTMLElement>('goal-tracker');
  const scene = el<HTMLElement>('scene-card');
  const banner = el<HTMLElement>('beat-banner');
  const ending = el<HTMLElement>('ending-screen');
  const input = el<HTMLInputElement>('utterance');
  const send = el<HTMLButtonElement>('send');

  controller.onChange(() => {
    const view = controller!.current();
    renderTranscript(transcript, controller!.transcript.all());
    renderStatusPanel(status, controller!.status.rows());
    renderGoalTracker(goals, controller!.goals.rows());
    renderSceneCard(scene, view.scene ? sceneCard(view.scene) : null);
    banner.textContent = view.beatBanner ?? '';
    banner.hidden = !view.beatBanner;
    input.disabled = !view.inputEnabled;
    send.disabled = !view.inputEnabled;
    ending.hidden = !view.ended;
    if (view.ended) {
      ending.textContent = view.endingSummary ?? 'The session has ended.';
    }
    transcript.scrollTop = transcript.scrollHeight;
  });

  const submit = async () => {
    const utterance = input.value;
    input.value = '';
    await controller!.submit(utterance);
  };
  send.onclick = submit;
  input.onkeydown = (event) => {
    if (event.key === 'Enter') void submit();
  };

  el<HTMLElement>('view-list').hidden = true;
  el<HTMLElement>('view-play').hidden = false;
  await controller.start(gameDoc, created.state);
}

function wireBuildFlow(): void {
  const build = new BuildFlowController(api);
  const seedInput = el<HTMLInputElement>('seed');
  const submitSeed = el<HTMLButtonElement>('submit-seed');
  const jobStatus = el<HTMLElement>('job-status');
  const editorWrap = el<HTMLElement>('stage-editor-wrap');
  const editor = el<HTMLTextAreaElement>('stage-editor');
  const resume = el<HTMLButtonElement>('resume-stage');
  const issues = el<HTMLElement>('validation-issues');

  build.onChange(() => {
    const view = build.current();
    jobStatus.textContent = view.job
      ? `${view.job.job_id}: ${view.phase}${view.editableStage ? ` (${view.editableStage})` : ''}`
      : '';
    editorWrap.hidden = view.phase !== 'needs_input';
    if (view.phase === 'needs_input') editor.value = view.editableText;
    issues.textContent = '';
    for (const issue of view.validationIssues) {
      const line = document.createElement('div');
      line.className = 'issue';
      line.textContent = `${issue.path}: ${issue.message}`;
      issues.appendChild(line);
    }
    if (view.phase === 'published') {
      jobStatus.textContent += ` — published ${view.publishedGameId}`;
      void showGameList();
    }
  });

  submitSeed.onclick = () => void build.submitSeed(seedInput.value);
  resume.onclick = () => void build.resumeWithEdit(editor.value);
}

el<HTMLButtonElement>('back-to-list').onclick = () => {
  controller?.stop();
  el<HTMLElement>('view-play').hidden = true;
  el<HTMLElement>('view-list').hidden = false;
  void showGameList();
};

wireBuildFlow();
void showGameList();
