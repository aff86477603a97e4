/** Minimal WebGL point-cloud renderer with orbit controls and picking.
 *
 * Structure exploration only: colored gl.POINTS, no splatting. Picking
 * is a CPU nearest-projected-point scan, plenty for decimated clouds.
 */

const VERTEX_SHADER = `
attribute vec3 position;
attribute vec3 color;
uniform mat4 viewProjection;
uniform float pointSize;
varying vec3 vColor;
void main() {
  gl_Position = viewProjection * vec4(position, 1.0);
  gl_PointSize = pointSize;
  vColor = color;
}`;

const FRAGMENT_SHADER = `
precision mediump float;
varying vec3 vColor;
void main() {
  vec2 d = gl_PointCoord - vec2(0.5);
  if (dot(d, d) > 0.25) discard;
  gl_FragColor = vec4(vColor, 1.0);
}`;

type Mat4 = Float32Array;

function perspective(fovY: number, aspect: number, near: number, far: number): Mat4 {
  const f = 1 / Math.tan(fovY / 2);
  const out = new Float32Array(16);
  out[0] = f / aspect;
  out[5] = f;
  out[10] = (far + near) / (near - far);
  out[11] = -1;
  out[14] = (2 * far * near) / (near - far);
  return out;
}

function lookAt(eye: number[], target: number[], up: number[]): Mat4 {
  const zx = eye[0] - target[0], zy = eye[1] - target[1], zz = eye[2] - target[2];
  let zl = Math.hypot(zx, zy, zz);
  const z = [zx / zl, zy / zl, zz / zl];
  const x = [
    up[1] * z[2] - up[2] * z[1],
    up[2] * z[0] - up[0] * z[2],
    up[0] * z[1] - up[1] * z[0],
  ];
  const xl = Math.hypot(x[0], x[1], x[2]);
  x[0] /= xl; x[1] /= xl; x[2] /= xl;
  const y = [
    z[1] * x[2] - z[2] * x[1],
    z[2] * x[0] - z[0] * x[2],
    z[0] * x[1] - z[1] * x[0],
  ];
  const out = new Float32Array(16);
  out[0] = x[0]; out[4] = x[1]; out[8] = x[2];
  out[1] = y[0]; out[5] = y[1]; out[9] = y[2];
  out[2] = z[0]; out[6] = z[1]; out[10] = z[2];
  out[12] = -(x[0] * eye[0] + x[1] * eye[1] + x[2] * eye[2]);
  out[13] = -(y[0] * eye[0] + y[1] * eye[1] + y[2] * eye[2]);
  out[14] = -(z[0] * eye[0] + z[1] * eye[1] + z[2] * eye[2]);
  out[15] = 1;
  return out;
}

function multiply(a: Mat4, b: Mat4): Mat4 {
  const out = new Float32Array(16);
  for (let col = 0; col < 4; col++) {
    for (let row = 0; row < 4; row++) {
      let sum = 0;
      for (let k = 0; k < 4; k++) sum += a[k * 4 + row] * b[col * 4 + k];
      out[col * 4 + row] = sum;
    }
  }
  return out;
}

export class PointCloudView {
  private gl: WebGLRenderingContext;
  private program: WebGLProgram;
  private positionBuffer: WebGLBuffer;
  private colorBuffer: WebGLBuffer;
  private count = 0;
  private positions: Float32Array | null = null;

  // Orbit camera state.
  azimuth = 0.4;
  elevation = 0.25;
  distance = 20;
  target = [0, 0, 0];

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl");
    if (!gl) throw new Error("WebGL unavailable");
    this.gl = gl;
    this.program = this.buildProgram();
    this.positionBuffer = gl.createBuffer()!;
    this.colorBuffer = gl.createBuffer()!;
    this.bindOrbitControls();
  }

  private buildProgram(): WebGLProgram {
    const gl = this.gl;
    const compile = (type: number, source: string): WebGLShader => {
      const shader = gl.createShader(type)!;
      gl.shaderSource(shader, source);
      gl.compileShader(shader);
      if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
        throw new Error(gl.getShaderInfoLog(shader) ?? "shader compile failed");
      }
      return shader;
    };
    const program = gl.createProgram()!;
    gl.attachShader(program, compile(gl.VERTEX_SHADER, VERTEX_SHADER));
    gl.attachShader(program, compile(gl.FRAGMENT_SHADER, FRAGMENT_SHADER));
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
      throw new Error(gl.getProgramInfoLog(program) ?? "program link failed");
    }
    return program;
  }

  setPoints(positions: Float32Array): void {
    this.positions = positions;
    this.count = positions.length / 3;
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.STATIC_DRAW);
    // Frame the cloud.
    let cx = 0, cy = 0, cz = 0;
    for (let i = 0; i < this.count; i++) {
      cx += positions[i * 3]; cy += positions[i * 3 + 1]; cz += positions[i * 3 + 2];
    }
    this.target = [cx / this.count, cy / this.count, cz / this.count];
    let radius = 1e-3;
    for (let i = 0; i < this.count; i++) {
      const dx = positions[i * 3] - this.target[0];
      const dy = positions[i * 3 + 1] - this.target[1];
      const dz = positions[i * 3 + 2] - this.target[2];
      radius = Math.max(radius, Math.hypot(dx, dy, dz));
    }
    this.distance = radius * 2.4;
  }

  setColors(colors: Float32Array): void {
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.colorBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, colors, gl.STATIC_DRAW);
  }

  private eye(): number[] {
    return [
      this.target[0] + this.distance * Math.cos(this.elevation) * Math.sin(this.azimuth),
      this.target[1] + this.distance * Math.sin(this.elevation),
      this.target[2] + this.distance * Math.cos(this.elevation) * Math.cos(this.azimuth),
    ];
  }

  private viewProjection(): Mat4 {
    const aspect = this.canvas.width / Math.max(this.canvas.height, 1);
    return multiply(
      perspective(0.9, aspect, 0.05, this.distance * 20),
      lookAt(this.eye(), this.target, [0, 1, 0]),
    );
  }

  render(): void {
    const gl = this.gl;
    gl.viewport(0, 0, this.canvas.width, this.canvas.height);
    gl.clearColor(0.08, 0.09, 0.11, 1.0);
    gl.enable(gl.DEPTH_TEST);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (this.count === 0) return;
    gl.useProgram(this.program);
    const vp = this.viewProjection();
    gl.uniformMatrix4fv(gl.getUniformLocation(this.program, "viewProjection"), false, vp);
    gl.uniform1f(gl.getUniformLocation(this.program, "pointSize"), 5.0);
    const positionLoc = gl.getAttribLocation(this.program, "position");
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.enableVertexAttribArray(positionLoc);
    gl.vertexAttribPointer(positionLoc, 3, gl.FLOAT, false, 0, 0);
    const colorLoc = gl.getAttribLocation(this.program, "color");
    gl.bindBuffer(gl.ARRAY_BUFFER, this.colorBuffer);
    gl.enableVertexAttribArray(colorLoc);
    gl.vertexAttribPointer(colorLoc, 3, gl.FLOAT, false, 0, 0);
    gl.drawArrays(gl.POINTS, 0, this.count);
  }

  /** Nearest rendered point within `radiusPx` of a canvas position. */
  pickAt(px: number, py: number, radiusPx = 12): number | null {
    if (!this.positions) return null;
    const vp = this.viewProjection();
    const w = this.canvas.width, h = this.canvas.height;
    let best = -1;
    let bestDist = radiusPx * radiusPx;
    let bestDepth = Infinity;
    for (let i = 0; i < this.count; i++) {
      const x = this.positions[i * 3], y = this.positions[i * 3 + 1], z = this.positions[i * 3 + 2];
      const cw = vp[3] * x + vp[7] * y + vp[11] * z + vp[15];
      if (cw <= 0) continue;
      const sx = ((vp[0] * x + vp[4] * y + vp[8] * z + vp[12]) / cw + 1) * 0.5 * w;
      const sy = (1 - ((vp[1] * x + vp[5] * y + vp[9] * z + vp[13]) / cw + 1) * 0.5) * h;
      const d2 = (sx - px) * (sx - px) + (sy - py) * (sy - py);
      if (d2 < bestDist || (d2 === bestDist && cw < bestDepth)) {
        best = i;
        bestDist = d2;
        bestDepth = cw;
      }
    }
    return best >= 0 ? best : null;
  }

  private bindOrbitControls(): void {
    let dragging = false;
    let moved = 0;
    let lastX = 0, lastY = 0;
    this.canvas.addEventListener("pointerdown", (event) => {
      dragging = true;
      moved = 0;
      lastX = event.clientX;
      lastY = event.clientY;
    });
    window.addEventListener("pointerup", () => {
      dragging = false;
    });
    window.addEventListener("pointermove", (event) => {
      if (!dragging) return;
      const dx = event.clientX - lastX;
      const dy = event.clientY - lastY;
      moved += Math.abs(dx) + Math.abs(dy);
      lastX = event.clientX;
      lastY = event.clientY;
      this.azimuth -= dx * 0.008;
      this.elevation = Math.min(
        1.5,
        Math.max(-1.5, this.elevation + dy * 0.006),
      );
      this.render();
    });
    this.canvas.addEventListener("wheel", (event) => {
      event.preventDefault();
      this.distance *= Math.exp(event.deltaY * 0.001);
      this.render();
    });
    // Expose "was this a click or a drag" to the app layer.
    this.canvas.addEventListener("click", (event) => {
      if (moved > 6) return;
      const rect = this.canvas.getBoundingClientRect();
      const x = ((event.clientX - rect.left) / rect.width) * this.canvas.width;
      const y = ((event.clientY - rect.top) / rect.height) * this.canvas.height;
      this.onPick?.(this.pickAt(x, y));
    });
  }

  onPick: ((pointIndex: number | null) => void) | null = null;
}
