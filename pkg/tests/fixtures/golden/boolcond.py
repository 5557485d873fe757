def in_range(x, lo, hi):
    if x >= lo and x <= hi:
        return True
    return False
