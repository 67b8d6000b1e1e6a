"""Community detection on mixture multi-layer networks by regularized tensor power iteration."""
