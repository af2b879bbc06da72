"""How many avoidance binaries each mode needs as the obstacle count grows.

Usage::

    python demos/binary_budget.py
"""
from clusterplan import count_binaries


def main(Ns: int = 18) -> None:
    print(f"{'obstacles':>9}{'unclustered':>13}{'Nc=2':>8}{'Nc=3':>8}")
    for No in (5, 10, 20, 45, 100):
        print(f"{No:>9}{count_binaries('unclustered', Ns, No):>13}"
              f"{count_binaries('clustered', Ns, No, 2):>8}{count_binaries('clustered', Ns, No, 3):>8}")


if __name__ == "__main__":
    main()
