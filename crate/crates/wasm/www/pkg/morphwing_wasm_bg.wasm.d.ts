/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_forcerun_free: (a: number, b: number) => void;
export const forcerun_curves: (a: number) => [number, number];
export const forcerun_downstroke: (a: number) => number;
export const forcerun_rmse: (a: number) => [number, number];
export const forcerun_upstroke: (a: number) => number;
export const gait_cycle: (a: number, b: number) => [number, number, number, number];
export const run_condition: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number];
export const step_response: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
