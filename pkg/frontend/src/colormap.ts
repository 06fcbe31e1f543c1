/** Colormaps. The benchmark's deviation/stress maps run linearly from
 *  white to dark brown. */

export type RGB = [number, number, number];

const WHITE: RGB = [1.0, 1.0, 1.0];
const DARK_BROWN: RGB = [0.35, 0.16, 0.04];

/** t in [0,1] -> white..dark-brown, linear in RGB. */
export function whiteBrown(t: number): RGB {
  const s = Math.min(Math.max(t, 0), 1);
  return [
    WHITE[0] + (DARK_BROWN[0] - WHITE[0]) * s,
    WHITE[1] + (DARK_BROWN[1] - WHITE[1]) * s,
    WHITE[2] + (DARK_BROWN[2] - WHITE[2]) * s,
  ];
}

export const COLORMAPS: Record<string, (t: number) => RGB> = {
  white_brown: whiteBrown,
};

export function colormapByName(name: string | undefined): (t: number) => RGB {
  return COLORMAPS[name ?? "white_brown"] ?? whiteBrown;
}
