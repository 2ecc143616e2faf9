/**
 * Figure recipes: each one maps experiment output directories to one or
 * more SVG files.  Recipes consume only the documented CSV columns via
 * requireColumns, so renamed outputs fail with a schema message.
 */

import { writeFileSync } from "node:fs";
import { join } from "node:path";

import { readTable, requireColumns, type Table } from "./csv.js";
import { renderPanel, type Series } from "./svg.js";

export interface RecipeContext {
  dataDir: string;
  outDir: string;
}

export interface Recipe {
  id: string;
  description: string;
  inputs: string[];
  render(ctx: RecipeContext): string[];
}

function table(ctx: RecipeContext, rel: string): Table {
  return readTable(join(ctx.dataDir, rel));
}

function write(ctx: RecipeContext, name: string, svg: string): string {
  const path = join(ctx.outDir, name);
  writeFileSync(path, svg + "\n");
  return path;
}

const sqrt = (v: number[]) => v.map(Math.sqrt);

function pvLoop(ctx: RecipeContext, dir: string, label: string): Series[] {
  const loop = table(ctx, `${dir}/pv_t30.csv`);
  const ideal = table(ctx, `${dir}/pv_ideal_t30.csv`);
  const [x, p] = requireColumns(loop, ["x", "p"]);
  const [xi, pi] = requireColumns(ideal, ["x", "p"]);
  return [
    { x, y: p, label },
    { x: xi, y: pi, label: `${label} (ideal)`, dash: "4 3", width: 1 },
  ];
}

function quantumEta(t: Table): { t: number[]; eta: number[] } {
  const [time, pw, ph] = requireColumns(t, ["t", "p_work", "p_hot"]);
  return { t: time, eta: pw.map((w, i) => (ph[i] > 0 ? w / ph[i] : NaN)) };
}

export const RECIPES: Recipe[] = [
  {
    id: "fig2",
    description: "ensemble momentum mean and spread, fast vs slow contact",
    inputs: ["fig2_fast/series.csv", "fig2_slow/series.csv"],
    render(ctx) {
      const series: Series[] = [];
      for (const [dir, label] of [
        ["fig2_fast", "kappa = 100"],
        ["fig2_slow", "kappa = 1"],
      ] as const) {
        const [t, lz, vz] = requireColumns(table(ctx, `${dir}/series.csv`), [
          "t",
          "mean_lz",
          "var_lz",
        ]);
        series.push({ x: t, y: lz, label });
        series.push({ x: t, y: sqrt(vz), label: `${label} spread`, dash: "4 3", width: 1 });
      }
      return [
        write(ctx, "fig2.svg", renderPanel({
          title: "Momentum gain of the driven rotor",
          xLabel: "g t",
          yLabel: "<L_z> and spread",
          series,
        })),
      ];
    },
  },
  {
    id: "fig4",
    description: "pressure-volume loops at fast and slow thermalization",
    inputs: [
      "fig2_fast/pv_t30.csv",
      "fig2_fast/pv_ideal_t30.csv",
      "fig4/pv_t30.csv",
      "fig4/pv_ideal_t30.csv",
    ],
    render(ctx) {
      const series = [
        ...pvLoop(ctx, "fig2_fast", "kappa = 100"),
        ...pvLoop(ctx, "fig4", "kappa = 1"),
      ];
      return [
        write(ctx, "fig4.svg", renderPanel({
          title: "Engine cycle in pressure-volume coordinates",
          xLabel: "x = -cos(phi)",
          yLabel: "mean mode intensity",
          series,
        })),
      ];
    },
  },
  {
    id: "fig5",
    description: "quantum vs classical momentum statistics in both regimes",
    inputs: [
      "fig5_highinertia/series.csv",
      "fig5_highinertia_classical/series.csv",
      "fig5_lowinertia/series.csv",
      "fig5_lowinertia_classical/series.csv",
      "fig5_lowinertia_backaction/series.csv",
    ],
    render(ctx) {
      const [tqh, lqh] = requireColumns(
        table(ctx, "fig5_highinertia/series.csv"), ["t", "mean_lz"]);
      const [tch, lch] = requireColumns(
        table(ctx, "fig5_highinertia_classical/series.csv"), ["t", "mean_lz"]);
      const mean = write(ctx, "fig5_mean.svg", renderPanel({
        title: "High-inertia regime: mean momentum",
        xLabel: "g t",
        yLabel: "<L_z>",
        series: [
          { x: tqh, y: lqh, label: "quantum" },
          { x: tch, y: lch, label: "classical", dash: "4 3" },
        ],
      }));
      const noise: Series[] = [];
      for (const [dir, label, dash] of [
        ["fig5_lowinertia", "quantum", undefined],
        ["fig5_lowinertia_backaction", "classical + backaction", "6 3"],
        ["fig5_lowinertia_classical", "classical", "2 3"],
      ] as const) {
        const [t, vz] = requireColumns(table(ctx, `${dir}/series.csv`),
          ["t", "var_lz"]);
        noise.push({ x: t, y: sqrt(vz), label, dash });
      }
      const spread = write(ctx, "fig5_noise.svg", renderPanel({
        title: "Low-inertia regime: momentum spread",
        xLabel: "g t",
        yLabel: "delta L_z",
        series: noise,
      }));
      return [mean, spread];
    },
  },
  {
    id: "fig6",
    description: "efficiency vs scaled momentum with the ideal-gain bound",
    inputs: ["fig6/curves.csv"],
    render(ctx) {
      const t = table(ctx, "fig6/curves.csv");
      const [x, eta, carnot] = requireColumns(t, [
        "lz_over_i_kappa",
        "eta",
        "carnot",
      ]);
      return [
        write(ctx, "fig6.svg", renderPanel({
          title: "Engine efficiency in the fast-contact limit",
          xLabel: "<L_z> / (I kappa)",
          yLabel: "efficiency",
          series: [
            { x, y: eta, label: "closed form" },
            { x, y: carnot, label: "reversible bound", dash: "4 3", width: 1 },
          ],
        })),
      ];
    },
  },
  {
    id: "fig7",
    description: "entropy balance of the thermalizing engine",
    inputs: ["fig7_entropy/series.csv"],
    render(ctx) {
      const t = table(ctx, "fig7_entropy/series.csv");
      const [time, prod, rate] = requireColumns(t, [
        "t",
        "entropy_production",
        "entropy_rate",
      ]);
      return [
        write(ctx, "fig7.svg", renderPanel({
          title: "Entropy production rate",
          xLabel: "g t",
          yLabel: "rate (k_B g)",
          yLog: true,
          series: [
            { x: time, y: prod, label: "intrinsic production" },
            { x: time, y: rate, label: "dS/dt", dash: "4 3", width: 1 },
          ],
        })),
      ];
    },
  },
  {
    id: "fig8",
    description: "quantum thermodynamic powers and efficiency over time",
    inputs: [
      "fig8_efficiency/series.csv",
      "fig5_lowinertia_classical/series.csv",
    ],
    render(ctx) {
      const q = table(ctx, "fig8_efficiency/series.csv");
      const [tq, ph, pw, pb] = requireColumns(q, [
        "t",
        "p_hot",
        "p_work",
        "p_backaction",
      ]);
      const powers = write(ctx, "fig8_powers.svg", renderPanel({
        title: "Quantum engine powers",
        xLabel: "g t",
        yLabel: "power (hbar g^2)",
        series: [
          { x: tq, y: ph, label: "heat intake" },
          { x: tq, y: pw, label: "work output" },
          { x: tq, y: pb, label: "backaction load", dash: "4 3", width: 1 },
        ],
      }));
      const { t: tEta, eta } = quantumEta(q);
      const [tc, etaC] = requireColumns(
        table(ctx, "fig5_lowinertia_classical/series.csv"), ["t", "efficiency"]);
      const etaFig = write(ctx, "fig8_efficiency.svg", renderPanel({
        title: "Efficiency: quantum vs classical",
        xLabel: "g t",
        yLabel: "efficiency",
        series: [
          { x: tEta, y: eta, label: "quantum" },
          { x: tc, y: etaC, label: "classical", dash: "4 3" },
        ],
      }));
      return [powers, etaFig];
    },
  },
];

export function findRecipe(id: string): Recipe {
  const recipe = RECIPES.find((r) => r.id === id);
  if (recipe === undefined) {
    const known = RECIPES.map((r) => r.id).join(", ");
    throw new Error(`unknown figure id '${id}' (known: ${known})`);
  }
  return recipe;
}
