/* tslint:disable */
/* eslint-disable */

/**
 * Phase-averaged truth and observer curves for one stand condition.
 */
export class ForceRun {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `PHASE_BINS` rows of `[phase %, truth x y z, observer x y z]`.
     */
    curves(): Float64Array;
    downstroke(): number;
    /**
     * Observer RMSE per axis after the first cycle (N).
     */
    rmse(): Float64Array;
    upstroke(): number;
}

/**
 * Joint angles over one wingbeat, rows of `[phase %, 8 angles]`, for the
 * stand gait with its default left/right asymmetry.
 */
export function gait_cycle(frequency: number, points: number): Float64Array;

/**
 * Simulates ten wingbeats on the stand and runs the observer with a gain
 * of `bandwidth_ratio` times the flap rate.
 */
export function run_condition(frequency: number, wind: number, pitch: number, bandwidth_ratio: number, wing_mass_error: number, noisy: boolean, seed: bigint): ForceRun;

/**
 * Observer response to a constant vertical force applied to the wings-still
 * stand. Rows of `[t, estimated F_z, A(1 − e^(−K t))]`.
 */
export function step_response(gain: number, force: number, duration: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_forcerun_free: (a: number, b: number) => void;
    readonly forcerun_curves: (a: number) => [number, number];
    readonly forcerun_downstroke: (a: number) => number;
    readonly forcerun_rmse: (a: number) => [number, number];
    readonly forcerun_upstroke: (a: number) => number;
    readonly gait_cycle: (a: number, b: number) => [number, number, number, number];
    readonly run_condition: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number];
    readonly step_response: (a: number, b: number, c: number) => [number, number, number, number];
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
