values = [1, 2, 3]
total = 0
for v in values:
    if v > 1:
        total += v
