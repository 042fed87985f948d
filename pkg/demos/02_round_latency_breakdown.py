#!/usr/bin/env python3
"""Where a training round spends its time, cut by cut.

Prices one device (500 samples, 1.3 TFLOPs, symmetric 10 KB/s link,
5 local epochs, 13 TFLOPs of server compute) across every cut of VGG19
and prints the four epoch terms plus model movement. This is the
single-user view of the objective the allocator minimizes.
"""

import esfl

arch = esfl.load_builtin("vgg19")
user = esfl.UserProfile(
    user_id=0,
    n_samples=500,
    compute_flops=1.3e12,
    rates=esfl.link_rates("direct", direct_kbps=10),
    epochs=5,
)
server_share = 13e12

print("per-cut round time, seconds (5 epochs, 10 KB/s, 1.3 TFLOPs device)")
header = f"{'cut':>4} {'t_up+t_down':>12} {'t_c x eps':>10} {'t_b+t_B x eps':>14} " \
         f"{'t_C x eps':>10} {'total':>12}"
print(header)
print("-" * len(header))
best_l, best_total = None, float("inf")
for l in range(1, arch.num_layers + 1):
    bd = esfl.round_time(user, arch, l, server_share)
    epoch = bd.epochs[0]
    model_t = bd.t_up + bd.t_down
    comm_t = 5 * (epoch.t_b + epoch.t_B)
    comp_t = 5 * epoch.t_c
    srv_t = 5 * epoch.t_C
    if bd.total < best_total:
        best_l, best_total = l, bd.total
    print(f"{l:>4} {model_t:>12.1f} {comp_t:>10.2f} {comm_t:>14.1f} "
          f"{srv_t:>10.2f} {bd.total:>12.1f}")

print(f"\nfastest cut for this device: layer {best_l} "
      f"({best_total:.1f} s) — matches best_cut: "
      f"{esfl.best_cut(user, arch, server_share)}")

print("\nnote the regime: at KB/s-scale rates the communication columns")
print("dwarf both compute columns, so the cut decision is driven almost")
print("entirely by the model-transfer vs activation-traffic trade")
