/* tslint:disable */
/* eslint-disable */

/**
 * Pearson, DTW and visibility-graph WL similarity of two series.
 */
export function compare_series(a: string, b: string, iterations: number): string;

/**
 * Simulates the planted 20-stock market and builds a network with `method`
 * (`pcc`, `dtw`, `vwl` or `dnl`), marking which edges are planted pairs.
 */
export function planted_network(seed: bigint, days: number, method: string, gamma: number, epochs: number): string;

/**
 * Natural visibility graph of a comma or whitespace separated series.
 */
export function visibility(series: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly compare_series: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly planted_network: (a: bigint, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly visibility: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
