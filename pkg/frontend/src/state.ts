/**
 * Editor state and its pure transitions.
 *
 * The geometry itself lives on the server: the studio only edits the move
 * list, mirrors the preview image and displays the server's coverage value
 * (the X-Valid-Fraction header) verbatim.
 */

import {
  EASINGS,
  KINDS,
  Move,
  MoveKind,
  fromWireTrajectory,
  toWireTrajectory,
} from "./schema";

export interface PreviewResult {
  /** Object URL (browser) or opaque handle (tests) for the preview PNG. */
  imageUrl: string;
  /** The X-Valid-Fraction header, untouched. */
  validFraction: string;
  frameIndex: number;
}

export interface EditorState {
  frames: number;
  moves: Move[];
  selectedFrame: number;
  splatRadius: number;
  preview: PreviewResult | null;
  previewStale: boolean;
  banner: string | null;
  fieldError: string | null;
  dirty: boolean;
}

export function initialState(frames: number): EditorState {
  return {
    frames,
    moves: [],
    selectedFrame: 0,
    splatRadius: 1,
    preview: null,
    previewStale: true,
    banner: null,
    fieldError: null,
    dirty: false,
  };
}

export function defaultMove(kind: MoveKind): Move {
  const move: Move = { kind, magnitude: kind === "zoom" ? 1.0 : 0.0, ease: "linear" };
  if (kind === "orbit") {
    move.pivotDepth = 2.0;
  }
  return move;
}

export function addMove(state: EditorState, kind: MoveKind): EditorState {
  return {
    ...state,
    moves: [...state.moves, defaultMove(kind)],
    previewStale: true,
    dirty: true,
    fieldError: null,
  };
}

export function removeMove(state: EditorState, index: number): EditorState {
  return {
    ...state,
    moves: state.moves.filter((_, i) => i !== index),
    previewStale: true,
    dirty: true,
    fieldError: null,
  };
}

export type EditableField = "kind" | "magnitude" | "ease" | "pivotDepth";

/**
 * Apply one field edit. Invalid values (non-numeric magnitudes, negative
 * pivot depths, unknown kinds) leave the state unchanged apart from an
 * inline field error; valid edits mark the preview stale so the controller
 * schedules a debounced request.
 */
export function editMove(
  state: EditorState,
  index: number,
  field: EditableField,
  value: string,
): EditorState {
  const move = state.moves[index];
  if (move === undefined) {
    return { ...state, fieldError: `no move at index ${index}` };
  }
  const next: Move = { ...move };
  if (field === "kind") {
    if (!(KINDS as readonly string[]).includes(value)) {
      return { ...state, fieldError: `unknown kind "${value}"` };
    }
    next.kind = value as MoveKind;
    if (next.kind === "orbit" && next.pivotDepth === undefined) {
      next.pivotDepth = 2.0;
    }
    if (next.kind !== "orbit") {
      delete next.pivotDepth;
    }
    if (next.kind === "zoom" && next.magnitude <= 0) {
      next.magnitude = 1.0;
    }
  } else if (field === "ease") {
    if (!(EASINGS as readonly string[]).includes(value)) {
      return { ...state, fieldError: `unknown easing "${value}"` };
    }
    next.ease = value as Move["ease"];
  } else {
    const parsed = Number(value);
    if (value.trim() === "" || !Number.isFinite(parsed)) {
      return { ...state, fieldError: `${field} must be a finite number` };
    }
    if (field === "pivotDepth") {
      if (next.kind !== "orbit") {
        return { ...state, fieldError: "pivot depth only applies to orbit" };
      }
      if (parsed <= 0) {
        return { ...state, fieldError: "pivot depth must be > 0" };
      }
      next.pivotDepth = parsed;
    } else {
      if (next.kind === "zoom" && parsed <= 0) {
        return { ...state, fieldError: "zoom scale must be > 0" };
      }
      next.magnitude = parsed;
    }
  }
  const moves = state.moves.slice();
  moves[index] = next;
  return { ...state, moves, previewStale: true, dirty: true, fieldError: null };
}

export function selectFrame(state: EditorState, frame: number): EditorState {
  const clamped = Math.min(Math.max(0, Math.round(frame)), state.frames - 1);
  return { ...state, selectedFrame: clamped, previewStale: true };
}

export function applyPreview(state: EditorState, result: PreviewResult): EditorState {
  return { ...state, preview: result, previewStale: false, banner: null };
}

/** A failed preview keeps the previous image and raises a retryable banner. */
export function previewFailed(state: EditorState, message: string): EditorState {
  return { ...state, banner: message };
}

export interface ExportProblem {
  index: number;
  message: string;
}

export function validateForExport(state: EditorState): ExportProblem[] {
  const problems: ExportProblem[] = [];
  state.moves.forEach((move, index) => {
    if (!Number.isFinite(move.magnitude)) {
      problems.push({ index, message: "magnitude must be finite" });
    }
    if (move.kind === "zoom" && move.magnitude <= 0) {
      problems.push({ index, message: "zoom scale must be > 0" });
    }
    if (move.kind === "orbit" && !(move.pivotDepth !== undefined && move.pivotDepth > 0)) {
      problems.push({ index, message: "orbit needs pivot depth > 0" });
    }
  });
  return problems;
}

/** Serialize the state to the documented wire format (schema-checked). */
export function exportTrajectory(state: EditorState): string {
  const problems = validateForExport(state);
  if (problems.length > 0) {
    const detail = problems.map((p) => `moves[${p.index}]: ${p.message}`).join("; ");
    throw new Error(`cannot export: ${detail}`);
  }
  return JSON.stringify(toWireTrajectory(state.frames, state.moves), null, 2);
}

/** Parse an exported document back into a fresh editor state. */
export function importTrajectory(text: string): EditorState {
  const { frames, moves } = fromWireTrajectory(JSON.parse(text));
  return { ...initialState(frames), moves, dirty: false };
}
