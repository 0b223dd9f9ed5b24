/* tslint:disable */
/* eslint-disable */

/**
 * A synthetic multi-modal dataset and a network with a 2-D embedding,
 * trained one epoch at a time.
 */
export class Playground {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Eval-mode embeddings, `x0, y0, x1, y1, …`.
     */
    embeddings(): Float64Array;
    epoch(): number;
    labels(): Uint32Array;
    /**
     * Mean total loss per completed epoch.
     */
    losses(): Float64Array;
    constructor(seed: number, classes: number, modes: number, daal: boolean, lambda_daal: number, tau: number);
    /**
     * NMI of a k-means clustering of the current embeddings.
     */
    nmi(): number;
    /**
     * `ax, ay, bx, by` per class; empty when training without DAAL.
     */
    segments(): Float64Array;
    /**
     * Runs `epochs` epochs; returns the last epoch's mean total loss.
     */
    step(epochs: number): number;
}

/**
 * Distance from every pixel center of a `width × height` grid over
 * `[x_min, x_max] × [y_min, y_max]` to the segment A–B. Row-major, top row
 * at `y_max`.
 */
export function distance_field(ax: number, ay: number, bx: number, by: number, x_min: number, x_max: number, y_min: number, y_max: number, width: number, height: number): Float64Array;

/**
 * Five rows of `samples` values: θ over `[0, π]`, `cos θ`, then the target
 * logit under the multiplicative-angular, additive-cosine and
 * additive-angular margins.
 */
export function margin_curves(sphere_m: number, cos_m: number, arc_m: number, samples: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_playground_free: (a: number, b: number) => void;
    readonly distance_field: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number];
    readonly margin_curves: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly playground_embeddings: (a: number) => [number, number, number, number];
    readonly playground_epoch: (a: number) => number;
    readonly playground_labels: (a: number) => [number, number];
    readonly playground_losses: (a: number) => [number, number];
    readonly playground_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly playground_nmi: (a: number) => [number, number, number];
    readonly playground_segments: (a: number) => [number, number];
    readonly playground_step: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
