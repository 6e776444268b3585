"""Independent Monte Carlo verification of a certified estimate.

Certificates should not be trusted blind: this demo rejection-samples states
inside the certified level set {V <= 1} and simulates each one under the
post-fault dynamics.  Every sample must converge to the equilibrium — a
single counterexample would disprove the certificate.

Run:  python3 demos/06_verification.py OUTDIR    (several minutes; reuses an
estimate directory produced by demo 05 if given one)
"""

import json
import os
import sys
import tempfile

from sosroa import cli

DATA = os.path.join(os.path.dirname(__file__), "..", "tests", "data")


def main():
    config = os.path.join(DATA, "smib.json")
    if len(sys.argv) > 1 and os.path.exists(
            os.path.join(sys.argv[1], "estimate", "estimate.json")):
        outroot = sys.argv[1]
        est_file = os.path.join(outroot, "estimate", "estimate.json")
        print(f"reusing estimate {est_file}")
    else:
        outroot = tempfile.mkdtemp(prefix="verify_demo_")
        est_dir = os.path.join(outroot, "estimate")
        print(f"no estimate supplied; running estimation -> {est_dir}")
        rc = cli.main(["estimate", "--config", config, "--out", est_dir,
                       "--seed", "0", "--max-outer", "2"])
        assert rc == 0
        est_file = os.path.join(est_dir, "estimate.json")

    ver_dir = os.path.join(outroot, "verify")
    rc = cli.main(["verify", "--config", config, "--out", ver_dir,
                   "--estimate", est_file, "--samples", "200", "--seed", "1"])
    assert rc == 0
    rep = json.loads(open(os.path.join(ver_dir,
                                       "verify_report.json")).read())
    print("\nverification report:")
    print(f"  samples:          {rep['samples']}")
    print(f"  converged:        {rep['converged']}")
    print(f"  fraction:         {rep['fraction']}")
    print(f"  acceptance rate:  {rep['acceptance_rate']:.3g}")
    print(f"  counterexamples:  {len(rep['counterexamples'])}")
    assert rep["fraction"] == 1.0, "certificate disproved!"
    print("\nevery sampled state inside {V <= 1} returns to the SEP")


if __name__ == "__main__":
    main()
