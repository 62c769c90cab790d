// DrawSurface over a 2D canvas context.

import { DrawSurface } from "./view.js";

export class CanvasSurface implements DrawSurface {
  constructor(private readonly ctx: CanvasRenderingContext2D) {}

  get width(): number {
    return this.ctx.canvas.width;
  }

  get height(): number {
    return this.ctx.canvas.height;
  }

  clear(): void {
    this.ctx.fillStyle = "#fdfdfd";
    this.ctx.fillRect(0, 0, this.width, this.height);
  }

  line(x1: number, y1: number, x2: number, y2: number, color: string, width: number): void {
    this.ctx.strokeStyle = color;
    this.ctx.lineWidth = width;
    this.ctx.beginPath();
    this.ctx.moveTo(x1, y1);
    this.ctx.lineTo(x2, y2);
    this.ctx.stroke();
  }

  circle(x: number, y: number, r: number, color: string, fill: boolean): void {
    this.ctx.beginPath();
    this.ctx.arc(x, y, r, 0, 2 * Math.PI);
    if (fill) {
      this.ctx.fillStyle = color;
      this.ctx.fill();
    } else {
      this.ctx.strokeStyle = color;
      this.ctx.lineWidth = 1.5;
      this.ctx.stroke();
    }
  }

  text(s: string, x: number, y: number, color: string): void {
    this.ctx.fillStyle = color;
    this.ctx.font = "12px sans-serif";
    this.ctx.fillText(s, x, y);
  }
}
