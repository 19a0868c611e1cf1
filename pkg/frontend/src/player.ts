/**
 * Canvas frame-sequence player. Multiple players can share one SyncGroup so
 * reviewers compare candidates on the same frame index.
 */

import { nextFrameIndex } from "./logic.js";
import { DecodedVideo, frameToRgba } from "./tvid.js";

export const DEFAULT_FPS = 4;
const SCALE = 16; // 8x8 source pixels look reasonable at 128x128

export class SyncGroup {
  private players: FramePlayer[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;
  frameIndex = 0;

  add(player: FramePlayer): void {
    this.players.push(player);
    player.draw(this.frameIndex);
    this.ensureRunning();
  }

  private ensureRunning(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => this.step(), 1000 / DEFAULT_FPS);
  }

  step(): void {
    const frames = Math.max(...this.players.map((p) => p.frameCount), 0);
    this.frameIndex = nextFrameIndex(this.frameIndex, frames);
    for (const player of this.players) {
      player.draw(this.frameIndex % Math.max(player.frameCount, 1));
    }
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }
}

export class FramePlayer {
  readonly canvas: HTMLCanvasElement;
  private video: DecodedVideo;

  constructor(video: DecodedVideo, doc: Document = document) {
    this.video = video;
    this.canvas = doc.createElement("canvas");
    this.canvas.width = video.w * SCALE;
    this.canvas.height = video.h * SCALE;
    this.canvas.className = "player";
  }

  get frameCount(): number {
    return this.video.t;
  }

  draw(frameIndex: number): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const frame = this.video.frames[Math.min(frameIndex, this.video.t - 1)];
    const image = new ImageData(frameToRgba(frame), this.video.w, this.video.h);
    // blit at native size, then scale up without smoothing
    const off = this.canvas.ownerDocument.createElement("canvas");
    off.width = this.video.w;
    off.height = this.video.h;
    off.getContext("2d")?.putImageData(image, 0, 0);
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.drawImage(off, 0, 0, this.canvas.width, this.canvas.height);
  }
}

export function errorCard(message: string, doc: Document = document): HTMLElement {
  const card = doc.createElement("div");
  card.className = "error-card";
  card.textContent = `cannot decode video: ${message}`;
  return card;
}
