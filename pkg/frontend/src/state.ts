// Console state: everything shown is re-derivable from service
// responses, so a refresh loses nothing but the visuals.

import type { ClassLabel, Verdict } from "./api";

export type Connection = "connected" | "degraded" | "offline";

export interface ConsoleState {
  sessionId: string | null;
  room: string;
  liquid: string;
  classLabel: ClassLabel;
  counts: Record<ClassLabel, number>;
  latestVerdict: Verdict | null;
  demoAccuracy: number | null;
  connection: Connection;
  lastError: string | null;
}

export function initialState(): ConsoleState {
  return {
    sessionId: null,
    room: "Atrium",
    liquid: "water",
    classLabel: "no_spill",
    counts: { spill: 0, no_spill: 0 },
    latestVerdict: null,
    demoAccuracy: null,
    connection: "offline",
    lastError: null,
  };
}

export function canAct(state: ConsoleState): boolean {
  return state.sessionId !== null && state.connection === "connected";
}

export function formatVerdict(v: Verdict): string {
  const pct = Math.round(v.confidence * 100);
  const ms = Math.round(v.latency_ms);
  return `${v.label === "spill" ? "SPILL" : "NO SPILL"} ${pct}% - ${ms} ms`;
}

export function formatAccuracy(acc: number | null): string {
  if (acc === null) return "-";
  const pct = acc * 100;
  return Number.isInteger(pct) ? `${pct}%` : `${pct.toFixed(1)}%`;
}
