// DOM renderers: each is a pure projection of its model, rebuilt on
// change, so DOM order can never drift from store order.

import { SceneCardView } from './scene.js';
import { AnchorRow, GoalRow } from './status.js';
import { TranscriptItem } from './transcript.js';

export function renderTranscript(container: HTMLElement, items: TranscriptItem[]): void {
  container.textContent = '';
  for (const item of items) {
    const bubble = container.ownerDocument.createElement('div');
    bubble.className = `bubble bubble-${item.kind}${item.pending ? ' pending' : ''}`;
    bubble.dataset.seq = String(item.seq);
    if (item.speaker) {
      const speaker = container.ownerDocument.createElement('span');
      speaker.className = 'speaker';
      speaker.textContent = item.speaker;
      bubble.appendChild(speaker);
    }
    const text = container.ownerDocument.createElement('span');
    text.className = 'text';
    text.textContent = item.text;
    bubble.appendChild(text);
    container.appendChild(bubble);
  }
}

export function renderStatusPanel(container: HTMLElement, rows: AnchorRow[]): void {
  container.textContent = '';
  for (const row of rows) {
    const line = container.ownerDocument.createElement('div');
    line.className = `anchor${row.changed ? ' changed' : ''}`;
    line.dataset.anchor = row.anchorId;
    line.textContent = `${row.anchorId}: ${row.value}`;
    container.appendChild(line);
  }
}

export function renderGoalTracker(container: HTMLElement, goals: GoalRow[]): void {
  container.textContent = '';
  for (const goal of goals) {
    const block = container.ownerDocument.createElement('div');
    block.className = `goal${goal.achieved ? ' achieved' : ''}`;
    const title = container.ownerDocument.createElement('div');
    title.className = 'goal-title';
    title.textContent = `${goal.achieved ? '✓' : '○'} ${goal.text}`;
    block.appendChild(title);
    for (const sub of goal.subgoals) {
      const line = container.ownerDocument.createElement('div');
      line.className = `subgoal${sub.achieved ? ' achieved' : ''}`;
      line.dataset.subgoal = sub.subgoalId;
      line.textContent = `${sub.achieved ? '✓' : '○'} ${sub.description}`;
      block.appendChild(line);
    }
    container.appendChild(block);
  }
}

export function renderSceneCard(container: HTMLElement, card: SceneCardView | null): void {
  container.textContent = '';
  if (!card) return;
  const doc = container.ownerDocument;
  const caption = doc.createElement('div');
  caption.className = 'scene-caption';
  caption.textContent = card.globalPrompt;
  container.appendChild(caption);
  const canvas = doc.createElement('div');
  canvas.className = 'scene-canvas';
  for (const box of card.boxes) {
    const region = doc.createElement('div');
    region.className = 'scene-region';
    region.dataset.entity = box.entityId;
    region.style.left = `${box.leftPct}%`;
    region.style.top = `${box.topPct}%`;
    region.style.width = `${box.widthPct}%`;
    region.style.height = `${box.heightPct}%`;
    if (box.imageUrl) {
      const img = doc.createElement('img');
      img.src = box.imageUrl;
      img.alt = box.entityId;
      region.appendChild(img);
    }
    const label = doc.createElement('div');
    label.className = 'scene-label';
    label.textContent = box.localPrompt;
    region.appendChild(label);
    canvas.appendChild(region);
  }
  container.appendChild(canvas);
}
