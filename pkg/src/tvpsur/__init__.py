"""Time-varying-parameter SUR estimation by orthogonal transformations."""
