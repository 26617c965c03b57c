// Application store: edited rectangles, solve lifecycle, displayed numbers.
// All displayed values come verbatim from service responses; the only local
// computation is the invalidation preview, which mirrors the diff semantics.

import { ApiClient, FieldData, ServiceBusyError, SolveResponse } from "./api";
import {
  GeometryDoc,
  Rect,
  affectedDomains,
  exportGeometry,
  importGeometry,
  sameGeometry,
} from "./geometry";

export type Listener = () => void;

export interface DisplayStats {
  estimateRelLoc: string;
  iterations: number;
  reducedDim: number;
  trainingsSkipped: number;
  greedysSkipped: number;
}

export function formatSignificant(value: number, digits = 3): string {
  if (!isFinite(value)) return "n/a";
  return value.toPrecision(digits);
}

export class AppStore {
  rectangles: Rect[] = [];
  committed: Rect[] = [];       // geometry the service currently holds
  mu = 1e5;
  tol = 1e-2;
  busy = false;
  error: string | null = null;
  lastSolve: SolveResponse | null = null;
  lastField: FieldData | null = null;
  lastIndicators: number[] = [];
  private listeners: Listener[] = [];

  constructor(private api: ApiClient) {}

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  // --- editing -----------------------------------------------------------------
  addRectangle(r: Rect): void {
    this.rectangles = [...this.rectangles, r];
    this.emit();
  }

  deleteRectangle(index: number): void {
    this.rectangles = this.rectangles.filter((_, i) => i !== index);
    this.emit();
  }

  loadGeometry(doc: GeometryDoc): void {
    this.rectangles = importGeometry(doc);
    this.committed = [...this.rectangles];
    this.emit();
  }

  exportDoc(): GeometryDoc {
    return exportGeometry(this.rectangles);
  }

  /** Domains the pending (uncommitted) edit would invalidate. */
  previewAffected(): number[] {
    if (sameGeometry(this.rectangles, this.committed)) return [];
    return affectedDomains(this.committed, this.rectangles);
  }

  get dirty(): boolean {
    return !sameGeometry(this.rectangles, this.committed);
  }

  // --- solving ------------------------------------------------------------------
  get canSolve(): boolean {
    return !this.busy;
  }

  async solve(): Promise<void> {
    if (this.busy) return;                 // single pending request
    this.busy = true;
    this.error = null;
    this.emit();
    try {
      if (this.dirty) {
        await this.api.putGeometry(this.exportDoc());
        this.committed = [...this.rectangles];
      }
      this.lastSolve = await this.api.solve(this.mu, this.tol);
      this.lastField = await this.api.field(this.mu);
      this.lastIndicators = (await this.api.indicators()).indicators;
    } catch (err) {
      this.error = err instanceof ServiceBusyError
        ? "service busy, try again"
        : String(err);
    } finally {
      this.busy = false;
      this.emit();
    }
  }

  displayStats(): DisplayStats | null {
    if (!this.lastSolve) return null;
    return {
      estimateRelLoc: formatSignificant(this.lastSolve.estimate_rel_loc),
      iterations: this.lastSolve.iterations,
      reducedDim: this.lastSolve.reduced_dim,
      trainingsSkipped: this.lastSolve.reuse_stats.trainings_skipped,
      greedysSkipped: this.lastSolve.reuse_stats.greedys_skipped,
    };
  }
}

/** Log-scale slider mapping: position in [0, 1] to mu in [1e0, 1e5]. */
export function sliderToMu(position: number): number {
  return Math.pow(10, 5 * Math.min(1, Math.max(0, position)));
}

export function muToSlider(mu: number): number {
  return Math.log10(Math.min(1e5, Math.max(1, mu))) / 5;
}
