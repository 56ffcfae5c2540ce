/**
 * First-person renderer: the overlay cloud drawn with engine-assigned
 * colors, box wireframes reconstructed from consecutive 8-corner groups.
 *
 * The camera sits at the FPV origin looking down +x (the engine's sensor
 * frame), so the scene graph is just the decoded points re-axed into
 * three.js's convention (x->-z, y->-x, z->y).
 */

import * as THREE from "three";

import { COLOR_BOX, COLOR_DEFAULT, COLOR_RED, OverlayPoints } from "./protocol.js";

const CLASS_COLORS: Record<number, [number, number, number]> = {
  [COLOR_DEFAULT]: [0.65, 0.7, 0.75],
  [COLOR_RED]: [1.0, 0.15, 0.1],
  [COLOR_BOX]: [1.0, 0.6, 0.1],
};

// box corner sign order used by the engine (geom.OrientedBox.corners)
const BOX_EDGES: [number, number][] = [
  [0, 1], [1, 2], [2, 3], [3, 0],
  [4, 5], [5, 6], [6, 7], [7, 4],
  [0, 4], [1, 5], [2, 6], [3, 7],
];

function toThree(x: number, y: number, z: number): [number, number, number] {
  return [-y, z, -x];
}

export class OverlayRenderer {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private points: THREE.Points | null = null;
  private wires: THREE.LineSegments | null = null;

  constructor(canvas: HTMLCanvasElement, width: number, height: number) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: false });
    this.renderer.setSize(width, height, false);
    this.camera = new THREE.PerspectiveCamera(55, width / height, 0.05, 80);
    this.camera.position.set(0, 0, 0);
    this.camera.lookAt(new THREE.Vector3(0, 0, -1)); // -z is the sensor's +x
    this.scene.background = new THREE.Color(0x0b0e13);
  }

  setOverlay(overlay: OverlayPoints, renderingEnabled: boolean): void {
    this.clear();
    const n = overlay.counts.total;
    const positions = new Float32Array(3 * n);
    const colors = new Float32Array(3 * n);
    const boxCorners: number[][] = [];
    let kept = 0;
    for (let i = 0; i < n; i++) {
      const cls = overlay.classes[i];
      const [x, y, z] = [overlay.positions[3 * i], overlay.positions[3 * i + 1],
                         overlay.positions[3 * i + 2]];
      if (cls === COLOR_BOX) {
        boxCorners.push([x, y, z]);
        continue; // corners are drawn as wireframes, not splats
      }
      if (!renderingEnabled && cls !== COLOR_DEFAULT) continue;
      const [tx, ty, tz] = toThree(x, y, z);
      positions.set([tx, ty, tz], 3 * kept);
      colors.set(CLASS_COLORS[cls] ?? CLASS_COLORS[COLOR_DEFAULT], 3 * kept);
      kept++;
    }
    const geo = new THREE.BufferGeometry();
    geo.setAttribute("position", new THREE.BufferAttribute(positions.slice(0, 3 * kept), 3));
    geo.setAttribute("color", new THREE.BufferAttribute(colors.slice(0, 3 * kept), 3));
    const mat = new THREE.PointsMaterial({ size: 0.035, vertexColors: true });
    this.points = new THREE.Points(geo, mat);
    this.scene.add(this.points);

    if (renderingEnabled && boxCorners.length >= 8) {
      const verts: number[] = [];
      for (let b = 0; b + 8 <= boxCorners.length; b += 8) {
        for (const [i, j] of BOX_EDGES) {
          verts.push(...toThree(...(boxCorners[b + i] as [number, number, number])));
          verts.push(...toThree(...(boxCorners[b + j] as [number, number, number])));
        }
      }
      const wgeo = new THREE.BufferGeometry();
      wgeo.setAttribute("position", new THREE.BufferAttribute(new Float32Array(verts), 3));
      const wmat = new THREE.LineBasicMaterial({ color: 0xffa040 });
      this.wires = new THREE.LineSegments(wgeo, wmat);
      this.scene.add(this.wires);
    }
  }

  private clear(): void {
    for (const obj of [this.points, this.wires]) {
      if (obj) {
        this.scene.remove(obj);
        obj.geometry.dispose();
        (obj.material as THREE.Material).dispose();
      }
    }
    this.points = null;
    this.wires = null;
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
