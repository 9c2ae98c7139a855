"""Comparing two methods with the non-parametric testing chain.

Patient-level metrics are paired across methods, so differences go through
the Wilcoxon signed-rank test; lesion-level segmentation scores come from
different detected-lesion sets, so they use the Mann-Whitney U test. A
Shapiro-Wilk screen justifies the non-parametric choice, and Bonferroni
correction with significance stars finishes the chain.
"""

import numpy as np

from lesioneval import (
    bonferroni,
    mann_whitney_u,
    shapiro_wilk,
    significance_stars,
    wilcoxon_signed_rank,
)

rng = np.random.default_rng(2)
n_patients = 24

# per-patient sensitivity for a baseline and an improved method (paired)
baseline = np.clip(rng.beta(2.5, 3.5, size=n_patients), 0, 1)
improved = np.clip(baseline + rng.normal(0.12, 0.08, size=n_patients), 0, 1)

print("normality screen (Shapiro-Wilk):")
for name, sample in (("baseline", baseline), ("improved", improved)):
    result = shapiro_wilk(sample)
    verdict = "looks normal" if result.p_value >= 0.05 else "not normal"
    print(f"  {name}: W={result.statistic:.4f} p={result.p_value:.4f} ({verdict})")

paired = wilcoxon_signed_rank(improved - baseline)
print(f"\npaired sensitivity comparison: W={paired.statistic:.1f} "
      f"p={paired.p_value:.5f} ({paired.method}, n={paired.n})")

# per-lesion Dice for the two methods (unpaired: different lesions detected)
dice_a = np.clip(rng.normal(0.55, 0.15, size=40), 0, 1)
dice_b = np.clip(rng.normal(0.66, 0.13, size=55), 0, 1)
unpaired = mann_whitney_u(dice_a, dice_b)
print(f"lesion-level dice comparison: U={unpaired.statistic:.1f} "
      f"p={unpaired.p_value:.5f} ({unpaired.method}, n={unpaired.n})")

# family of 3 comparisons per metric -> Bonferroni with m=3
raw = [paired.p_value, unpaired.p_value, 0.2]
adjusted = bonferroni(raw, m=3)
print("\nBonferroni-adjusted p-values and stars (m=3):")
for p, p_adj in zip(raw, adjusted):
    print(f"  p={p:.5f} -> p_adj={p_adj:.5f} {significance_stars(p_adj)}")
