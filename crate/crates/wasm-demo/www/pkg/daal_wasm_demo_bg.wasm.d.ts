/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_playground_free: (a: number, b: number) => void;
export const distance_field: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number];
export const margin_curves: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const playground_embeddings: (a: number) => [number, number, number, number];
export const playground_epoch: (a: number) => number;
export const playground_labels: (a: number) => [number, number];
export const playground_losses: (a: number) => [number, number];
export const playground_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const playground_nmi: (a: number) => [number, number, number];
export const playground_segments: (a: number) => [number, number];
export const playground_step: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
