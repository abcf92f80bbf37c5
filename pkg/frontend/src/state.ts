/**
 * Frame bookkeeping: the displayed frame is always the newest received for
 * the newest generation, and the HUD always describes the displayed frame
 * (both swap atomically in accept()).
 */

import type { Frame } from "./protocol.js";

export interface Hud {
  passIndex: number;
  completeness: number;
  activeRays: number;
  complete: boolean;
}

export class ViewerState {
  latestGeneration = 0;
  private lastPassIndex = -1;
  frame: Frame | null = null;
  hud: Hud | null = null;

  /** Returns true if the frame became the displayed one; stale frames
   * (older generation, or replayed pass of the current one) are dropped. */
  accept(frame: Frame): boolean {
    if (frame.generation < this.latestGeneration) {
      return false;
    }
    if (frame.generation === this.latestGeneration && frame.passIndex <= this.lastPassIndex) {
      return false;
    }
    if (frame.generation > this.latestGeneration) {
      this.latestGeneration = frame.generation;
    }
    this.lastPassIndex = frame.passIndex;
    this.frame = frame;
    this.hud = {
      passIndex: frame.passIndex,
      completeness: frame.completeness,
      activeRays: frame.nActive,
      complete: frame.final,
    };
    return true;
  }
}
