// Client-side clamp of the pointer displacement to the movement circle.
// The server re-clamps authoritatively; this just keeps the UI honest.

export function clampDisplacement(
  dx: number,
  dy: number,
  maxStep: number
): { dx: number; dy: number } {
  const norm = Math.hypot(dx, dy);
  if (norm <= maxStep || norm === 0) return { dx, dy };
  const s = maxStep / norm;
  return { dx: dx * s, dy: dy * s };
}
