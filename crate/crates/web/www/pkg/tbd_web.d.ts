/* tslint:disable */
/* eslint-disable */

/**
 * Result of [`deblatt_scene`]: images as RGBA bytes and curves as
 * flattened `x, y` samples.
 */
export class Scene {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    blur(): Uint8Array;
    fitted(): Float64Array;
    frame(): Uint8Array;
    truth(): Float64Array;
    /**
     * Relative L2 error of the estimated blur against the true one.
     */
    readonly blur_error: number;
    readonly fit_error: number;
    readonly height: number;
    readonly width: number;
}

/**
 * Result of [`fit_stroke`].
 */
export class StrokeFit {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    blur(): Uint8Array;
    fitted(): Float64Array;
    readonly fit_error: number;
    readonly pieces: number;
}

/**
 * TIoU of a ball of `radius` tracked with a constant `offset` error.
 */
export function constant_offset_tiou(offset: number, radius: number): number;

/**
 * Render a ball moving `length` pixels at `angle_deg` with a sideways
 * `bend`, add noise, then recover its blur and trajectory.
 */
export function deblatt_scene(length: number, angle_deg: number, bend: number, noise: number, seed: number): Scene;

/**
 * Fit a piecewise-quadratic trajectory to a hand-drawn stroke.
 */
export function fit_stroke(points: Float64Array, width: number, height: number): StrokeFit;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_scene_free: (a: number, b: number) => void;
    readonly __wbg_strokefit_free: (a: number, b: number) => void;
    readonly constant_offset_tiou: (a: number, b: number) => number;
    readonly deblatt_scene: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly fit_stroke: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly scene_blur: (a: number) => [number, number];
    readonly scene_blur_error: (a: number) => number;
    readonly scene_fit_error: (a: number) => number;
    readonly scene_fitted: (a: number) => [number, number];
    readonly scene_frame: (a: number) => [number, number];
    readonly scene_height: (a: number) => number;
    readonly scene_truth: (a: number) => [number, number];
    readonly scene_width: (a: number) => number;
    readonly strokefit_blur: (a: number) => [number, number];
    readonly strokefit_fit_error: (a: number) => number;
    readonly strokefit_fitted: (a: number) => [number, number];
    readonly strokefit_pieces: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
