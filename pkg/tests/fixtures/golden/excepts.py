def safe_div(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        return 0.0
