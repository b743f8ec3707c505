"""Classical mechanics on Lie-algebraic noncommutative phase spaces."""
