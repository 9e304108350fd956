/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_passage_free: (a: number, b: number) => void;
export const mtfImage: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const passageSignal: (a: number, b: number, c: number, d: number) => [number, number, number];
export const passage_accel: (a: number) => [number, number];
export const passage_sampleRateHz: (a: number) => number;
export const passage_speedKmh: (a: number) => number;
export const passage_strain: (a: number) => [number, number];
export const passage_wheelLoadTons: (a: number) => number;
export const wheelProfile: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
