class Counter:
    def __init__(self):
        self.count = 0

    def bump(self, by):
        if by > 0:
            self.count += by
        return self.count
