/**
 * Orbit camera: azimuth/elevation around a target point at a distance.
 * Azimuth 0, elevation 0 looks down -z toward the target from +z, matching
 * the benchmark orbit's first position.
 */

import type { CameraSpec, Vec3 } from "./protocol.js";

const DEG = Math.PI / 180;

export class OrbitCamera {
  azimuthDeg = 0;
  elevationDeg = 0;
  distance: number;
  target: Vec3;
  fovY: number;
  minDistance: number;
  maxDistance: number;
  degPerPixel = 0.4;

  constructor(target: Vec3, distance: number, fovY = 45.0) {
    this.target = [...target] as Vec3;
    this.distance = distance;
    this.fovY = fovY;
    this.minDistance = distance * 0.05;
    this.maxDistance = distance * 10;
  }

  drag(dxPx: number, dyPx: number): void {
    this.azimuthDeg = (this.azimuthDeg + dxPx * this.degPerPixel) % 360;
    this.elevationDeg = Math.min(
      89,
      Math.max(-89, this.elevationDeg + dyPx * this.degPerPixel),
    );
  }

  wheel(deltaY: number): void {
    this.distance = Math.min(
      this.maxDistance,
      Math.max(this.minDistance, this.distance * Math.exp(deltaY * 0.001)),
    );
  }

  eye(): Vec3 {
    const az = this.azimuthDeg * DEG;
    const el = this.elevationDeg * DEG;
    const r = this.distance * Math.cos(el);
    return [
      this.target[0] + r * Math.sin(az),
      this.target[1] + this.distance * Math.sin(el),
      this.target[2] + r * Math.cos(az),
    ];
  }

  toCameraSpec(): CameraSpec {
    return {
      eye: this.eye(),
      look_at: [...this.target] as Vec3,
      up: [0, 1, 0],
      fov_y: this.fovY,
    };
  }
}

/** Default orbit for a volume: distance 1.8x the largest dimension, looking
 * at the volume center (the same geometry the CLI benchmark uses). */
export function defaultOrbit(dims: Vec3): OrbitCamera {
  const center: Vec3 = [(dims[0] - 1) / 2, (dims[1] - 1) / 2, (dims[2] - 1) / 2];
  return new OrbitCamera(center, 1.8 * Math.max(...dims));
}
