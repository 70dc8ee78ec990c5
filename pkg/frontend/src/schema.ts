/**
 * Trajectory wire format shared with the render service.
 *
 * The editor state keeps one uniform Move shape; the wire format names the
 * magnitude field by kind (deg / units / scale). Everything exported is
 * validated against the zod schema first, so a download that passes here
 * also parses on the server side.
 */

import { z } from "zod";

export const EASINGS = ["linear", "smoothstep"] as const;
export type Easing = (typeof EASINGS)[number];

export const KINDS = [
  "pan",
  "tilt",
  "zoom",
  "pedestal",
  "truck",
  "dolly",
  "orbit",
] as const;
export type MoveKind = (typeof KINDS)[number];

export interface Move {
  kind: MoveKind;
  magnitude: number;
  ease: Easing;
  pivotDepth?: number;
}

export const MAGNITUDE_KEY: Record<MoveKind, "deg" | "units" | "scale"> = {
  pan: "deg",
  tilt: "deg",
  orbit: "deg",
  pedestal: "units",
  truck: "units",
  dolly: "units",
  zoom: "scale",
};

const ease = z.enum(EASINGS);
const finite = z.number().finite();

const angularMove = (kind: "pan" | "tilt") =>
  z.object({ kind: z.literal(kind), deg: finite, ease }).strict();
const linearMove = (kind: "pedestal" | "truck" | "dolly") =>
  z.object({ kind: z.literal(kind), units: finite, ease }).strict();

export const wireMoveSchema = z.discriminatedUnion("kind", [
  angularMove("pan"),
  angularMove("tilt"),
  linearMove("pedestal"),
  linearMove("truck"),
  linearMove("dolly"),
  z.object({ kind: z.literal("zoom"), scale: finite.positive(), ease }).strict(),
  z
    .object({
      kind: z.literal("orbit"),
      deg: finite,
      ease,
      pivot_depth: finite.positive(),
    })
    .strict(),
]);

export const wireTrajectorySchema = z
  .object({
    frames: z.number().int().min(1),
    moves: z.array(wireMoveSchema),
  })
  .strict();

export type WireMove = z.infer<typeof wireMoveSchema>;
export type WireTrajectory = z.infer<typeof wireTrajectorySchema>;

export function toWireMove(move: Move): WireMove {
  const base = { kind: move.kind, ease: move.ease } as Record<string, unknown>;
  base[MAGNITUDE_KEY[move.kind]] = move.magnitude;
  if (move.kind === "orbit") {
    base["pivot_depth"] = move.pivotDepth;
  }
  return wireMoveSchema.parse(base);
}

export function fromWireMove(wire: WireMove): Move {
  const magnitude = (wire as Record<string, unknown>)[
    MAGNITUDE_KEY[wire.kind]
  ] as number;
  const move: Move = { kind: wire.kind, magnitude, ease: wire.ease };
  if (wire.kind === "orbit") {
    move.pivotDepth = wire.pivot_depth;
  }
  return move;
}

export function toWireTrajectory(frames: number, moves: Move[]): WireTrajectory {
  return wireTrajectorySchema.parse({ frames, moves: moves.map(toWireMove) });
}

export function fromWireTrajectory(doc: unknown): { frames: number; moves: Move[] } {
  const parsed = wireTrajectorySchema.parse(doc);
  return { frames: parsed.frames, moves: parsed.moves.map(fromWireMove) };
}
