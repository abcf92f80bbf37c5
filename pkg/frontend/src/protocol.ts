/**
 * Wire protocol shared with the render service.
 *
 * Control messages are JSON text; render passes arrive as binary frames:
 *   u32 magic 0x57465250, u32 generation, u32 pass_index,
 *   u32 flags (bit0 = final), u32 width, u32 height, u32 n_active,
 *   f32 completeness, then width*height*4 bytes of RGBA.
 * All fields little-endian.
 */

export const FRAME_MAGIC = 0x57465250;
export const FLAG_FINAL = 1;
const HEADER_BYTES = 32;

export interface Frame {
  generation: number;
  passIndex: number;
  final: boolean;
  width: number;
  height: number;
  nActive: number;
  completeness: number;
  rgba: Uint8Array;
}

export function parseFrame(buf: ArrayBuffer): Frame {
  if (buf.byteLength < HEADER_BYTES) {
    throw new Error(`frame too short: ${buf.byteLength} bytes`);
  }
  const view = new DataView(buf);
  const magic = view.getUint32(0, true);
  if (magic !== FRAME_MAGIC) {
    throw new Error(`bad frame magic 0x${magic.toString(16)}`);
  }
  const generation = view.getUint32(4, true);
  const passIndex = view.getUint32(8, true);
  const flags = view.getUint32(12, true);
  const width = view.getUint32(16, true);
  const height = view.getUint32(20, true);
  const nActive = view.getUint32(24, true);
  const completeness = view.getFloat32(28, true);
  const rgba = new Uint8Array(buf, HEADER_BYTES);
  if (rgba.byteLength !== width * height * 4) {
    throw new Error(
      `frame payload size ${rgba.byteLength} does not match ${width}x${height}`,
    );
  }
  return { generation, passIndex, final: (flags & FLAG_FINAL) !== 0, width, height, nActive, completeness, rgba };
}

export type Vec3 = [number, number, number];

export interface CameraSpec {
  eye: Vec3;
  look_at: Vec3;
  up: Vec3;
  fov_y: number;
}

export interface SetViewParams {
  camera: CameraSpec;
  iso: number;
  width: number;
  height: number;
  speculation: boolean;
}

export function encodeSetView(params: SetViewParams): string {
  return JSON.stringify({ type: "set_view", ...params });
}

export function encodeInfoRequest(): string {
  return JSON.stringify({ type: "info_request" });
}

export interface InfoMessage {
  type: "info";
  dims: Vec3;
  value_range: [number, number];
}

export interface ErrorMessage {
  type: "error";
  code: string;
  reason: string;
}

export type ServerText = InfoMessage | ErrorMessage;

export function parseServerText(text: string): ServerText {
  const msg = JSON.parse(text);
  if (msg.type === "info" || msg.type === "error") {
    return msg as ServerText;
  }
  throw new Error(`unknown server message type ${String(msg.type)}`);
}
