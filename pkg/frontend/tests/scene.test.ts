import assert from 'node:assert/strict';
import { test } from 'node:test';

import { sceneCard } from '../src/scene.js';
import { SceneDescriptor } from '../src/types.js';

const DESCRIPTOR: SceneDescriptor = {
  turn: 3,
  global_prompt: 'The killing blow. I drove my blade home.',
  modality: 'image',
  regions: [
    { entity_id: 'dragon', region: [0, 0, 0.5, 1], local_prompt: 'Dragon: the wyrm', reference_asset: 'dragon.image.v1' },
    { entity_id: 'guard', region: [0.5, 0, 0.5, 1], local_prompt: 'Guard: a soldier', reference_asset: null },
  ],
};

test('regions map to percent boxes', () => {
  const card = sceneCard(DESCRIPTOR);
  assert.equal(card.globalPrompt, DESCRIPTOR.global_prompt);
  assert.deepEqual(card.boxes.map((b) => [b.leftPct, b.topPct, b.widthPct, b.heightPct]),
                   [[0, 0, 50, 100], [50, 0, 50, 100]]);
  assert.equal(card.boxes[0].referenceAsset, 'dragon.image.v1');
  assert.equal(card.boxes[0].imageUrl, null);
});

test('image url slot resolves per entity', () => {
  const card = sceneCard(DESCRIPTOR, (id) => (id === 'guard' ? '/renders/guard.png' : null));
  assert.equal(card.boxes[0].imageUrl, null);
  assert.equal(card.boxes[1].imageUrl, '/renders/guard.png');
});

test('thirds round to two decimals', () => {
  const card = sceneCard({
    ...DESCRIPTOR,
    regions: [
      { entity_id: 'a', region: [0, 0, 1 / 3, 1], local_prompt: 'a', reference_asset: null },
      { entity_id: 'b', region: [1 / 3, 0, 1 / 3, 1], local_prompt: 'b', reference_asset: null },
      { entity_id: 'c', region: [2 / 3, 0, 1 / 3, 1], local_prompt: 'c', reference_asset: null },
    ],
  });
  assert.deepEqual(card.boxes.map((b) => b.leftPct), [0, 33.33, 66.67]);
});
