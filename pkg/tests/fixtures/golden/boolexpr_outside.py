def merge_flags(a, b):
    combined = a or b
    return combined
