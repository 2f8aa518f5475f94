/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Up to `max_points` cloud points, interleaved `x, y`.
     */
    cloud(max_points: number): Float32Array;
    /**
     * Recovers the phase map with one estimator; JSON summary with the
     * step and the phase MAE with and without piston removal.
     */
    demodulate(method: string, kappa: number, iterations: number): string;
    /**
     * `n` points on the fitted ellipse in centered cloud coordinates.
     */
    ellipse(method: string, kappa: number, iterations: number, n: number): Float32Array;
    /**
     * Fits every estimator; JSON array of `{method, delta, delta_abs_error, fit}`.
     */
    fit(kappa: number, iterations: number): string;
    /**
     * RGBA bytes of `frame1`, `frame2`, `normalized1`, `normalized2`,
     * `truth`, `phase` or `error`.
     */
    image(which: string): Uint8Array;
    /**
     * Square pair of side `size` from pattern family `pattern`.
     */
    constructor(size: number, pattern: number, noise: number, step: number, seed: bigint);
    /**
     * Normalize both frames with a bank of the given periods, or use them
     * as they are when `skip` is set. Returns the border excluded from fits.
     */
    normalize(periods: Float64Array, orientations: number, skip: boolean): number;
    size(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_cloud: (a: number, b: number) => [number, number, number, number];
    readonly demo_demodulate: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_ellipse: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly demo_fit: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_image: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly demo_normalize: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_size: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
