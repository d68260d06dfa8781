from conclique_gof.conclique import build_cover, label_grid, verify_conclique
from conclique_gof.lattice import SamplingWindow, named_template

window = SamplingWindow.full((6, 6))

for name in ("four_nearest", "eight_nearest", "unilateral"):
    print(f"--- Testing '{name}' ---")
    template = named_template(name)
    cover = build_cover(template)
    labels = label_grid(window, cover)
    print(f"q={cover.q} q*={cover.q_star} groups={cover.group_offsets()}")
    for j in range(cover.q):
        ok = verify_conclique(window.points(labels == j), template)
        print(f" - conclique {j}: {int((labels == j).sum())} sites, conclique={ok}")
    for row in labels:
        print("   " + " ".join(str(v) for v in row))
