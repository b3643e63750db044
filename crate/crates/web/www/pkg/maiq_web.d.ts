/* tslint:disable */
/* eslint-disable */

/**
 * Category names in model output order.
 */
export function categoryNames(): string[];

/**
 * JSON list of the top three `{label, probability}` for a solid color.
 */
export function classifyColor(r: number, g: number, b: number, int8: boolean): string;

export function finalScore(top1_pct: number, top3_pct: number, runtime_ms: number, log2c: number): number;

/**
 * JSON `{scale, zero_point, reconstructed}`.
 */
export function quantCurve(rmin: number, rmax: number, xs: Float64Array): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly categoryNames: () => [number, number];
    readonly classifyColor: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly finalScore: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly quantCurve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
