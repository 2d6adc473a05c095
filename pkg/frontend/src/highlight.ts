/**
 * Mapping of relevance scores onto visual intensity buckets.
 *
 * Scores at or below the threshold are not highlighted at all; above it the
 * intensity grows proportionally with the score, with a score of 1.0 always
 * landing in the strongest bucket.
 */

export const DEFAULT_THRESHOLD = 0.5;
export const MAX_LEVEL = 4;

/** Bucket a similarity score into 0 (none) .. MAX_LEVEL (strongest). */
export function highlightLevel(
  score: number,
  threshold: number = DEFAULT_THRESHOLD,
): number {
  if (!Number.isFinite(score) || score <= threshold) {
    return 0;
  }
  const span = 1 - threshold;
  if (span <= 0) {
    return MAX_LEVEL;
  }
  const level = 1 + Math.floor(((score - threshold) / span) * MAX_LEVEL);
  return Math.min(level, MAX_LEVEL);
}

/** CSS class for a bucket; empty string when there is no highlight. */
export function highlightClass(level: number): string {
  return level <= 0 ? "" : `hl-${Math.min(level, MAX_LEVEL)}`;
}
