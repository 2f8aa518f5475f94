/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_cloud: (a: number, b: number) => [number, number, number, number];
export const demo_demodulate: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const demo_ellipse: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const demo_fit: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_image: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const demo_normalize: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const demo_size: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
