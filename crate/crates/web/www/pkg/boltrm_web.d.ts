/* tslint:disable */
/* eslint-disable */

export class Passage {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly accel: Float32Array;
    readonly sampleRateHz: number;
    readonly speedKmh: number;
    readonly strain: Float32Array;
    readonly wheelLoadTons: number;
}

/**
 * Row-major `size × size` Markov transition field of `values`.
 */
export function mtfImage(values: Float32Array, q: number, size: number): Float64Array;

/**
 * One passage of the default benchmark's domain `domain` (1-based) with the
 * given class.
 */
export function passageSignal(domain: number, _class: string, seed: number): Passage;

/**
 * Tread deviation in mm at `points` evenly spaced positions around the
 * wheel. `kind` is `flat` (uses `flat_length_mm`) or `polygon` (draws a
 * profile from `seed`).
 */
export function wheelProfile(kind: string, radius_m: number, flat_length_mm: number, seed: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_passage_free: (a: number, b: number) => void;
    readonly mtfImage: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly passageSignal: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly passage_accel: (a: number) => [number, number];
    readonly passage_sampleRateHz: (a: number) => number;
    readonly passage_speedKmh: (a: number) => number;
    readonly passage_strain: (a: number) => [number, number];
    readonly passage_wheelLoadTons: (a: number) => number;
    readonly wheelProfile: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
