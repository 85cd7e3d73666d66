// Scene descriptors render as labeled layout diagrams: the global prompt
// captions a canvas of percent-positioned region boxes. An image slot per
// region lets deployments with a generation service attach real renders.

import { SceneDescriptor } from './types.js';

export interface SceneBoxView {
  entityId: string;
  leftPct: number;
  topPct: number;
  widthPct: number;
  heightPct: number;
  localPrompt: string;
  referenceAsset: string | null;
  imageUrl: string | null; // populated by an external generation service
}

export interface SceneCardView {
  turn: number;
  globalPrompt: string;
  boxes: SceneBoxView[];
}

export function sceneCard(descriptor: SceneDescriptor,
                          imageUrlFor?: (entityId: string) => string | null): SceneCardView {
  return {
    turn: descriptor.turn,
    globalPrompt: descriptor.global_prompt,
    boxes: descriptor.regions.map((region) => {
      const [x, y, w, h] = region.region;
      return {
        entityId: region.entity_id,
        leftPct: round2(x * 100),
        topPct: round2(y * 100),
        widthPct: round2(w * 100),
        heightPct: round2(h * 100),
        localPrompt: region.local_prompt,
        referenceAsset: region.reference_asset,
        imageUrl: imageUrlFor ? imageUrlFor(region.entity_id) : null,
      };
    }),
  };
}

function round2(value: number): number {
  return Math.round(value * 100) / 100;
}
