/**
 * Glue between editor state, the debouncer and the preview client.
 *
 * Edits mark the preview stale and arm a 150 ms trailing debounce; when it
 * fires, at most one request is in flight and a newer request supersedes the
 * older one (latest wins). Failures keep the previous image and surface a
 * retryable banner.
 */

import { StudioApi } from "./api";
import { Debouncer } from "./debounce";
import {
  EditableField,
  EditorState,
  applyPreview,
  editMove,
  initialState,
  previewFailed,
  selectFrame,
} from "./state";
import { MoveKind } from "./schema";
import { addMove, removeMove } from "./state";

export const PREVIEW_DEBOUNCE_MS = 150;

export type UrlFactory = (blob: Blob) => string;

const defaultUrlFactory: UrlFactory = (blob) =>
  typeof URL !== "undefined" && "createObjectURL" in URL
    ? URL.createObjectURL(blob)
    : `blob:${blob.size}`;

export class StudioController {
  state: EditorState;
  private readonly debouncer: Debouncer;
  private generation = 0;
  private inFlight: AbortController | null = null;
  private listeners: Array<(state: EditorState) => void> = [];

  constructor(
    private readonly api: StudioApi,
    frames: number,
    debounceMs: number = PREVIEW_DEBOUNCE_MS,
    private readonly urlFactory: UrlFactory = defaultUrlFactory,
  ) {
    this.state = initialState(frames);
    this.debouncer = new Debouncer(debounceMs);
  }

  subscribe(listener: (state: EditorState) => void): void {
    this.listeners.push(listener);
  }

  private commit(state: EditorState): void {
    this.state = state;
    for (const listener of this.listeners) {
      listener(state);
    }
  }

  addMove(kind: MoveKind): void {
    this.commit(addMove(this.state, kind));
    this.schedulePreview();
  }

  removeMove(index: number): void {
    this.commit(removeMove(this.state, index));
    this.schedulePreview();
  }

  /** Field edit; invalid input raises an inline error and sends nothing. */
  editMove(index: number, field: EditableField, value: string): void {
    const next = editMove(this.state, index, field, value);
    const changed = next.moves !== this.state.moves;
    this.commit(next);
    if (changed) {
      this.schedulePreview();
    }
  }

  selectFrame(frame: number): void {
    this.commit(selectFrame(this.state, frame));
    this.schedulePreview();
  }

  /** Arm (or re-arm) the trailing debounce for a preview request. */
  schedulePreview(): void {
    this.debouncer.schedule(() => {
      void this.requestPreview();
    });
  }

  /** Fire the preview request immediately; newer requests supersede it. */
  async requestPreview(): Promise<void> {
    const generation = ++this.generation;
    if (this.inFlight !== null) {
      this.inFlight.abort();
    }
    const controller = typeof AbortController !== "undefined" ? new AbortController() : null;
    this.inFlight = controller;
    const { selectedFrame, moves, splatRadius } = this.state;
    try {
      const result = await this.api.preview(
        selectedFrame,
        moves,
        splatRadius,
        controller?.signal,
      );
      if (generation !== this.generation) {
        return; // a newer request superseded this one
      }
      this.commit(
        applyPreview(this.state, {
          imageUrl: this.urlFactory(result.imageBlob),
          validFraction: result.validFraction,
          frameIndex: selectedFrame,
        }),
      );
    } catch (err) {
      if (generation !== this.generation) {
        return;
      }
      const message = err instanceof Error ? err.message : String(err);
      this.commit(previewFailed(this.state, `${message} — retry`));
    } finally {
      if (this.inFlight === controller) {
        this.inFlight = null;
      }
    }
  }

  /** The coverage meter text: the server header, verbatim. */
  coverageMeter(): string {
    return this.state.preview?.validFraction ?? "–";
  }
}
