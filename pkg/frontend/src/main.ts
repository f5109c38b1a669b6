// DOM bootstrap: wires sliders, transport buttons, and the three preview
// canvases to a PanelController.

import { PanelController, PanelState, PreviewSink } from './panel.js';
import {
  KIND_COMPOSITE,
  KIND_INPUT,
  KIND_OUTPUT,
  ParamName,
  PARAM_NAMES,
  PARAM_RANGES,
} from './protocol.js';

class CanvasPreviews implements PreviewSink {
  constructor(private readonly canvases: Record<number, HTMLCanvasElement>) {}

  draw(kind: number, _index: number, png: Uint8Array): void {
    const canvas = this.canvases[kind];
    if (!canvas) return;
    const blob = new Blob([png.buffer as ArrayBuffer], { type: 'image/png' });
    createImageBitmap(blob)
      .then((bitmap) => {
        canvas.width = bitmap.width;
        canvas.height = bitmap.height;
        canvas.getContext('2d')?.drawImage(bitmap, 0, 0);
        bitmap.close();
      })
      .catch(() => console.warn('undecodable preview image dropped'));
  }
}

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function render(state: PanelState): void {
  byId<HTMLSpanElement>('status').textContent = state.connection;
  byId<HTMLSpanElement>('fps').textContent = state.fps.toFixed(1);
  byId<HTMLButtonElement>('pause').textContent = state.paused ? 'resume' : 'pause';
  byId<HTMLButtonElement>('record').textContent = state.recording ? 'stop record' : 'record';
  const banner = byId<HTMLDivElement>('banner');
  banner.textContent = state.banner ?? '';
  banner.style.display = state.banner ? 'block' : 'none';
  const toast = byId<HTMLDivElement>('toast');
  toast.textContent = state.toast ?? '';
  toast.style.display = state.toast ? 'block' : 'none';
  for (const name of PARAM_NAMES) {
    const slider = byId<HTMLInputElement>(`slider-${name}`);
    if (document.activeElement !== slider) {
      slider.value = String(state.params[name]);
    }
    byId<HTMLSpanElement>(`value-${name}`).textContent = String(state.params[name]);
  }
}

export function start(): PanelController {
  const previews = new CanvasPreviews({
    [KIND_INPUT]: byId<HTMLCanvasElement>('canvas-input'),
    [KIND_OUTPUT]: byId<HTMLCanvasElement>('canvas-output'),
    [KIND_COMPOSITE]: byId<HTMLCanvasElement>('canvas-composite'),
  });
  const params = new URLSearchParams(window.location.search);
  const url = params.get('ws') ?? `ws://${window.location.hostname || '127.0.0.1'}:7654`;
  const panel = new PanelController({ url, previews, onChange: render });

  for (const name of PARAM_NAMES) {
    const range = PARAM_RANGES[name];
    const slider = byId<HTMLInputElement>(`slider-${name}`);
    slider.min = String(range.min);
    slider.max = String(range.max);
    slider.step = String(range.step);
    slider.addEventListener('input', () => {
      panel.setParam(name as ParamName, Number(slider.value));
    });
  }
  byId<HTMLButtonElement>('pause').addEventListener('click', () => {
    panel.setPaused(!panel.state.paused);
  });
  byId<HTMLButtonElement>('record').addEventListener('click', () => {
    panel.setRecording(!panel.state.recording);
  });

  panel.connect();
  return panel;
}

if (typeof document !== 'undefined' && document.getElementById('canvas-input')) {
  start();
}
