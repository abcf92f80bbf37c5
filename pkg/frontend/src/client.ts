/**
 * Service connection and input handling.
 *
 * ViewerClient owns the socket: it requests volume info on connect,
 * dispatches binary frames through ViewerState (stale generations are
 * dropped there), and reconnects with exponential backoff. The WebSocket
 * factory and timers are injectable so tests can run against fakes or the
 * `ws` package.
 *
 * InputController turns pointer/wheel/slider input into orbit and isovalue
 * updates and sends one set_view per quiescence window (50 ms debounce).
 */

import { debounce, realTimers, type Debounced, type Timers } from "./debounce.js";
import { OrbitCamera } from "./orbit.js";
import {
  encodeInfoRequest,
  encodeSetView,
  parseFrame,
  parseServerText,
  type Frame,
  type InfoMessage,
  type SetViewParams,
} from "./protocol.js";
import { ViewerState } from "./state.js";

export interface WebSocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type ConnectionStatus = "connecting" | "open" | "retrying" | "closed";

export interface ViewerClientOptions {
  url: string;
  wsFactory: (url: string) => WebSocketLike;
  timers?: Timers;
  reconnectBaseMs?: number;
  reconnectMaxMs?: number;
  onFrame?: (frame: Frame) => void;
  onInfo?: (info: InfoMessage) => void;
  onServerError?: (code: string, reason: string) => void;
  onStatus?: (status: ConnectionStatus, attempt: number) => void;
}

export class ViewerClient {
  readonly state = new ViewerState();
  info: InfoMessage | null = null;
  status: ConnectionStatus = "closed";

  private readonly opts: ViewerClientOptions;
  private readonly timers: Timers;
  private ws: WebSocketLike | null = null;
  private attempt = 0;
  private retryHandle: unknown = null;
  private closedByUser = false;

  constructor(opts: ViewerClientOptions) {
    this.opts = opts;
    this.timers = opts.timers ?? realTimers;
  }

  connect(): void {
    this.closedByUser = false;
    this.openSocket();
  }

  private setStatus(status: ConnectionStatus): void {
    this.status = status;
    this.opts.onStatus?.(status, this.attempt);
  }

  private openSocket(): void {
    this.setStatus(this.attempt === 0 ? "connecting" : "retrying");
    const ws = this.opts.wsFactory(this.opts.url);
    this.ws = ws;
    ws.binaryType = "arraybuffer";
    ws.onopen = () => {
      this.attempt = 0;
      this.setStatus("open");
      ws.send(encodeInfoRequest());
    };
    ws.onmessage = (ev) => this.handleMessage(ev.data);
    ws.onerror = () => {
      // onclose follows; nothing to do beyond letting retry logic run
    };
    ws.onclose = () => {
      this.ws = null;
      if (this.closedByUser) {
        this.setStatus("closed");
        return;
      }
      const base = this.opts.reconnectBaseMs ?? 500;
      const max = this.opts.reconnectMaxMs ?? 10_000;
      const delay = Math.min(max, base * 2 ** this.attempt);
      this.attempt += 1;
      this.setStatus("retrying");
      this.retryHandle = this.timers.set(() => this.openSocket(), delay);
    };
  }

  private handleMessage(data: unknown): void {
    if (typeof data === "string") {
      const msg = parseServerText(data);
      if (msg.type === "info") {
        this.info = msg;
        this.opts.onInfo?.(msg);
      } else {
        this.opts.onServerError?.(msg.code, msg.reason);
      }
      return;
    }
    if (data instanceof ArrayBuffer) {
      let frame: Frame;
      try {
        frame = parseFrame(data);
      } catch {
        return; // malformed frame: drop, keep the connection
      }
      if (this.state.accept(frame)) {
        this.opts.onFrame?.(frame);
      }
    }
  }

  setView(params: SetViewParams): void {
    if (this.ws && this.status === "open") {
      this.ws.send(encodeSetView(params));
    }
  }

  requestInfo(): void {
    this.ws?.send(encodeInfoRequest());
  }

  close(): void {
    this.closedByUser = true;
    if (this.retryHandle !== null) {
      this.timers.clear(this.retryHandle);
      this.retryHandle = null;
    }
    this.ws?.close();
  }
}

export interface InputControllerOptions {
  width: number;
  height: number;
  speculation?: boolean;
  debounceMs?: number;
  timers?: Timers;
}

export class InputController {
  readonly orbit: OrbitCamera;
  iso: number;
  width: number;
  height: number;
  speculation: boolean;
  sendCount = 0;

  private readonly client: Pick<ViewerClient, "setView">;
  private readonly debounced: Debounced;

  constructor(
    client: Pick<ViewerClient, "setView">,
    orbit: OrbitCamera,
    iso: number,
    opts: InputControllerOptions,
  ) {
    this.client = client;
    this.orbit = orbit;
    this.iso = iso;
    this.width = opts.width;
    this.height = opts.height;
    this.speculation = opts.speculation ?? true;
    this.debounced = debounce(
      () => this.sendNow(),
      opts.debounceMs ?? 50,
      opts.timers ?? realTimers,
    );
  }

  currentParams(): SetViewParams {
    return {
      camera: this.orbit.toCameraSpec(),
      iso: this.iso,
      width: this.width,
      height: this.height,
      speculation: this.speculation,
    };
  }

  private sendNow(): void {
    this.sendCount += 1;
    this.client.setView(this.currentParams());
  }

  drag(dxPx: number, dyPx: number): void {
    this.orbit.drag(dxPx, dyPx);
    this.debounced.trigger();
  }

  wheel(deltaY: number): void {
    this.orbit.wheel(deltaY);
    this.debounced.trigger();
  }

  setIso(value: number): void {
    this.iso = value;
    this.debounced.trigger();
  }

  /** Send the current view immediately (initial view, tests). */
  sendImmediately(): void {
    this.debounced.cancel();
    this.sendNow();
  }
}
