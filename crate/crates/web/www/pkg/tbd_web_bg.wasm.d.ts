/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_scene_free: (a: number, b: number) => void;
export const __wbg_strokefit_free: (a: number, b: number) => void;
export const constant_offset_tiou: (a: number, b: number) => number;
export const deblatt_scene: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const fit_stroke: (a: number, b: number, c: number, d: number) => [number, number, number];
export const scene_blur: (a: number) => [number, number];
export const scene_blur_error: (a: number) => number;
export const scene_fit_error: (a: number) => number;
export const scene_fitted: (a: number) => [number, number];
export const scene_frame: (a: number) => [number, number];
export const scene_height: (a: number) => number;
export const scene_truth: (a: number) => [number, number];
export const scene_width: (a: number) => number;
export const strokefit_blur: (a: number) => [number, number];
export const strokefit_fit_error: (a: number) => number;
export const strokefit_fitted: (a: number) => [number, number];
export const strokefit_pieces: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
