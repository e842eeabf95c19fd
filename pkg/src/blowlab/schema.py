"""Public output contract: CSV columns and JSON field names per command.

Every CSV is RFC 4180 (CRLF, comma separated, '.' decimal) with values
written in shortest round-trip double precision, so identical configs
reproduce identical bytes.  Manifests carry timestamps and are exempt from
the byte-identity guarantee; everything else listed here is covered by it.
"""

TRAJECTORY_CSV = ("s", "t", "b", "lambda")

FIT_JSON = ("kappa", "exponent", "residual", "T_est", "T_est_alt",
            "window_lo", "window_hi")

PROFILE_SUMMARY_CSV = (
    "b", "c_b", "d_b", "norm_H", "norm_w8", "norm_H2", "flux_ratio",
    "ratio_H", "ratio_w8", "ratio_H2", "flux_scaled",
)

ERROR_REPORT_JSON = ("variant", "b", "norm_H", "norm_w8", "norm_H2", "flux_ratio")

CHECKPOINT_CSV = (
    "step", "t", "s", "lambda", "b", "kappa", "E", "E1", "E2", "E4",
    "E2_hat", "u_max", "res_phi", "res_hphi", "decomposed",
)

DIAGNOSTIC_CSV = (
    "s", "b", "lam_residual", "b_residual",
    "E2_ratio", "E4_ratio", "kappa_ratio",
)

LYAPUNOV_CSV = ("t", "E4_over_lam6", "E2hat_over_lam2")

SHOOT_HISTORY_CSV = ("iteration", "a_lo", "a_hi")

SUITE_JSON = ("name", "samples", "worst_ratio", "violated", "tolerance")

MANIFEST_JSON = (
    "artifact", "version", "command", "config", "started", "finished",
    "ok", "termination", "files", "metrics",
)
