"""HTTP front end over the annotation pipeline."""
