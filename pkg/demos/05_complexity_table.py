"""Analytic parameter and FLOP accounting for the four necks, line by
line, plus the pairwise deltas the counts were frozen against."""

from a2fpn import analysis

# headline table at the detection-benchmark working size
reports = [analysis.count_flops(a) for a in ("fpn", "pafpn", "a2fpn", "a2fpn_lite")]
print(analysis.format_table(reports))

# the two baseline necks differ by four 3x3 convs and three adds;
# the parameter delta is exact, the FLOP delta is the frozen reference
fpn = analysis.count_flops("fpn")
pafpn = analysis.count_flops("pafpn")
d = analysis.diff_report(pafpn, fpn)
print(f"\npafpn - fpn: {d.total_params:+,} params, {d.total_flops / 1e9:+.4f} GFLOPs")

# the attention neck swaps the plain resampling for predicted kernels and
# adds the context machinery; itemized against the stronger baseline
a2 = analysis.count_flops("a2fpn")
print("\n" + analysis.format_diff(analysis.diff_report(a2, pafpn)))

# per-category split shows where the work lives
print("\nFLOPs by category (a2fpn @ 1280x832):")
for cat in ("conv", "matmul", "elementwise"):
    print(f"  {cat:<12} {a2.category_flops(cat) / 1e9:10.2f} G")

# counts hold for any backbone widths and any 64-divisible image size
small = analysis.count_flops("a2fpn", backbone_spec=(64, 128, 256, 512),
                             image_size=(256, 256))
print(f"\nsmall backbone @ 256x256: {small.total_params:,} params, "
      f"{small.total_flops / 1e9:.2f} GFLOPs")
